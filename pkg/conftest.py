import sys
from pathlib import Path

# let `pytest` work from a fresh checkout without an editable install
src = Path(__file__).parent / "src"
if src.is_dir() and str(src) not in sys.path:
    sys.path.insert(0, str(src))
