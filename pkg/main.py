from bidwright.core import logger
from bidwright.harness.cli import main as cli_main


def main():
    """
    Main entry point for Bidwright. Dispatches to the command-line interface.
    """
    logger.debug("[Main] Starting bidwright.")
    cli_main()


if __name__ == "__main__":
    main()
