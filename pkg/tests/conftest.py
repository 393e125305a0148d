import sys
from pathlib import Path

# Oracle helpers live next to the tests and are imported as plain modules.
sys.path.insert(0, str(Path(__file__).parent))
