"""
The response module for building structured, JSON-serialisable results.

Every command of sed-suite-bench reports through a `Response`: score
reports, suite summaries, bank summaries and errors. Fields keep their
insertion order, so equal responses serialise to identical JSON.
"""

import json
from decimal import Decimal
from enum import Enum
from typing import Any


class ResponseEncoder(json.JSONEncoder):
    """Encodes nested responses, dataclass-like records, Decimals and enums."""

    def default(self, o) -> Any:
        if isinstance(o, Response):
            return o.to_dict()
        if hasattr(o, "to_dict"):
            return o.to_dict()
        if isinstance(o, Decimal):
            return str(o)
        if isinstance(o, Enum):
            return o.value
        return super().default(o)


class Response:
    """
    A base class for a response.

    Subclasses pass their fields as keyword arguments and expose them
    through typed properties built on `get_value`.
    """

    def __init__(self, **fields: Any):
        self._fields: dict[str, Any] = dict(fields)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self._fields!r})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Response):
            return NotImplemented
        return type(self) is type(other) and self._fields == other._fields

    def get_value(self, key: str) -> Any:
        """
        Get the value of one response field.

        Args:
            key (str): Field name

        Returns:
            Any: The field value
        """
        return self._fields[key]

    def to_dict(self) -> dict[str, Any]:
        """A shallow copy of the fields."""
        return dict(self._fields)

    def to_json(self) -> str:
        """
        Stringify the response to indented JSON.

        Returns:
            str: JSON string
        """
        return json.dumps(self._fields, ensure_ascii=False, indent=2, cls=ResponseEncoder)
