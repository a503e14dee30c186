import sys
from pathlib import Path

# sibling oracle modules (oracle_dynamics, ...) import as plain modules
sys.path.insert(0, str(Path(__file__).resolve().parent))
