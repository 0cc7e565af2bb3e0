"""Entry point for ``python -m descreg``."""

from .cli import main

if __name__ == "__main__":
    raise SystemExit(main())
