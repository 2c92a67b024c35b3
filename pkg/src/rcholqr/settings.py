from dotenv import load_dotenv
import os

load_dotenv()

# root folder for per-run log directories written by the bench harness
LOG_DIR = os.getenv("RCHOLQR_LOG_DIR", "logs")

# optional results store; persistence is disabled when this is unset
DATABASE_URL = os.getenv("RCHOLQR_DATABASE_URL") or None

MAX_WORKERS = int(os.getenv("RCHOLQR_WORKERS", str(os.cpu_count() or 1)))

# rows handled per pass of the back substitution sweep. Any value gives the same bits.
TRISOLVE_CHUNK = int(os.getenv("RCHOLQR_TRISOLVE_CHUNK", "16384"))
