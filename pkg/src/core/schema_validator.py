from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from jsonschema import Draft202012Validator
import json

from src.core.errors import FormatError


SCHEMA_DIR = Path(__file__).resolve().parent / "schemas"


def load_json_schema_from_file(path: str | Path) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def try_validate_with_jsonschema(schema: Dict[str, Any], data: Any) -> Tuple[bool, Optional[list[str]]]:
    """Validate data against a JSON Schema dict. Returns (is_valid, errors)."""
    validator = Draft202012Validator(schema)
    errors = [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}" for e in validator.iter_errors(data)]
    return (len(errors) == 0, None if not errors else errors)


class SchemaValidator:
    """JSON Schema wrapper for one of the bundled artifact schemas."""

    def __init__(self, schema_path: str | Path):
        self.schema_path = Path(schema_path)
        self.schema = load_json_schema_from_file(self.schema_path)

    @classmethod
    def bundled(cls, name: str) -> "SchemaValidator":
        """Load ``src/core/schemas/<name>.schema.json``."""
        return cls(SCHEMA_DIR / f"{name}.schema.json")

    def validate(self, data: Any) -> Tuple[bool, Optional[list[str]]]:
        return try_validate_with_jsonschema(self.schema, data)

    def require(self, data: Any, what: str) -> None:
        """Raise FormatError naming the first violations when ``data`` does not conform."""
        ok, errors = self.validate(data)
        if not ok:
            raise FormatError(f"{what} does not match {self.schema_path.name}: {'; '.join(errors[:3])}")


__all__ = [
    "load_json_schema_from_file",
    "try_validate_with_jsonschema",
    "SchemaValidator",
    "SCHEMA_DIR",
]
