from .response import Response


class SuiteSummary(Response):
    """
    A wrapper class of one generated suite.

    This class contains:
    - status (str): Processing result status.
    - suite (str): Suite name, e.g. "ref" or "TNTSNR_15_short_reverb".
    - clips (int): Number of clips written.
    - audio_seconds (float): Total seconds of audio written.
    - path (str): Suite directory.
    """

    def __init__(self, suite: str, clips: int, audio_seconds: float, path: str,
                 status: str = "SUCCESS"):
        super().__init__(status=status, suite=suite, clips=clips,
                         audio_seconds=audio_seconds, path=path)

    def summary_line(self) -> str:
        return (f"{self.get_value('suite')}: {self.get_value('clips')} clips, "
                f"{self.get_value('audio_seconds'):.1f} s of audio")


class BankSummary(Response):
    """
    A wrapper class of a validated source bank.

    This class contains:
    - status (str): Processing result status.
    - sample_rate (int): Bank sample rate in Hz.
    - classes (dict[str, int]): Clips per target class.
    - non_targets (int), backgrounds (int), rooms (int): Asset counts.
    - manifest_sha256 (str): Provenance hash of the manifest bytes.
    """

    def __init__(self, sample_rate: int, classes: dict[str, int], non_targets: int,
                 backgrounds: int, rooms: int, manifest_sha256: str,
                 status: str = "SUCCESS"):
        super().__init__(status=status, sample_rate=sample_rate, classes=classes,
                         non_targets=non_targets, backgrounds=backgrounds,
                         rooms=rooms, manifest_sha256=manifest_sha256)
