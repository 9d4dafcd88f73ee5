from datetime import datetime

from .response import Response


class ErrorResponse(Response):
    """
    A wrapper class of a failed command.

    This class contains:
    - status (str): Always "ERROR".
    - error_name (str): Short failure category, e.g. "Bank Error".
    - error_details (str): Message naming the offending path, field or line.
    - exit_code (int): Process exit code the CLI returns.
    - time (str): When the failure happened.
    """

    def __init__(self, error_name: str, error_details: str, exit_code: int = 1):
        super().__init__(
            status="ERROR",
            error_name=error_name,
            error_details=error_details,
            exit_code=exit_code,
            time=datetime.now().strftime("%d/%m/%Y, %H:%M:%S"))
