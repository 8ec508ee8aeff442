import os
import sys

# make the shared oracle helpers importable regardless of invocation directory
sys.path.insert(0, os.path.dirname(__file__))
