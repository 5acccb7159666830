import logging
import sys
from dotenv import load_dotenv

load_dotenv()

import settings
from cli import main as run_cli

logging.basicConfig(
    level=settings.log_level(),
    format="%(asctime)s [%(levelname)s] %(message)s",
    handlers=[logging.StreamHandler(sys.stdout)],
)


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
