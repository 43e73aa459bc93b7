import sys
from pathlib import Path

from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

# fixed example generation keeps the suite reproducible run to run
settings.register_profile("repro", derandomize=True, deadline=None, print_blob=True)
settings.load_profile("repro")
