import sys

from dotenv import load_dotenv

from dgossip.cli import main

# Load environment variables (DGOSSIP_SEED, LOG_LEVEL, LOG_DIR)
load_dotenv()

if __name__ == "__main__":
    sys.exit(main())
