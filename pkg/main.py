#!/usr/bin/env python3
import sys

from dotenv import load_dotenv

from src.cli.commands import main


load_dotenv()


def run() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    run()
