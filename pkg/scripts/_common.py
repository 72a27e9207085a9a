"""Small helpers shared by the experiment scripts."""
import argparse
import dataclasses
import json
from pathlib import Path


def parse_into(cls, description: str):
    """Build an argparse parser from a dataclass and return a filled instance."""
    parser = argparse.ArgumentParser(description=description)
    for f in dataclasses.fields(cls):
        default = f.default
        flag = "--" + f.name.replace("_", "-")
        if isinstance(default, bool):
            parser.add_argument(flag, action="store_true" if not default else "store_false")
        else:
            parser.add_argument(flag, type=type(default), default=default)
    return cls(**vars(parser.parse_args()))


def save_settings(cfg, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "settings.json").write_text(json.dumps(dataclasses.asdict(cfg), indent=2) + "\n")
