import sys
from pathlib import Path

# Add project root to path
sys.path.append(str(Path(__file__).parent))

from src.reduction_engine.cli import main

if __name__ == "__main__":
    main()
