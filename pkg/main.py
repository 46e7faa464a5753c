"""Thin bootstrap entrypoint for the dpl command line."""

from dpl.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
