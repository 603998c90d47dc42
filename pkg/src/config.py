import logging
import os
from dotenv import load_dotenv

load_dotenv()

class Settings:
    DATA_DIR: str = os.getenv("DBLOSS_DATA_DIR", "./dataset")
    RESULTS_DIR: str = os.getenv("DBLOSS_RESULTS_DIR", "./results")
    LOG_LEVEL: str = os.getenv("DBLOSS_LOG_LEVEL", "INFO")
    JOBS: int = int(os.getenv("DBLOSS_JOBS", 1))

settings = Settings()


def configure_logging(level: str | None = None) -> None:
    logging.basicConfig(
        level=(level or settings.LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
