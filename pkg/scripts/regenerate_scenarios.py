"""Rewrite the shipped scenario YAML files from their builders.

Run after changing a builder; the golden-file test compares the shipped files
against the builders byte for byte.
"""

from hydroilqr.scenarios import BUILTIN, save_config, shipped_path


def main() -> None:
    for name, build in BUILTIN.items():
        path = shipped_path(name)
        save_config(build(), path)
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
