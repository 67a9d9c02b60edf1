"""Cloud side of the deployment loop: accounts, uploads, fine-tune jobs, OTA.

A FastAPI app over a single-file sqlite store (WAL journaling). Devices
authenticate with static bearer tokens; fine-tuning runs in a background
worker; bundles publish atomically and devices pick them up by polling.
"""

from .app import create_app
from .config import ServerConfig
from .store import Store

__all__ = ["ServerConfig", "Store", "create_app"]
