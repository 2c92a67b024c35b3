from typing import Dict, Optional

from sqlalchemy import Engine, create_engine

from .. import settings
from .models import Base

# engines are created lazily, one per URL, so importing the package never touches a database
_engines: Dict[str, Engine] = {}


def get_engine(url: Optional[str] = None) -> Optional[Engine]:
    """Engine for `url` (default RCHOLQR_DATABASE_URL), tables created on first use; None when no URL is configured."""
    url = url or settings.DATABASE_URL
    if not url:
        return None
    if url not in _engines:
        engine = create_engine(url)
        Base.metadata.create_all(engine)
        _engines[url] = engine
    return _engines[url]
