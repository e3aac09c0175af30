"""
Process-level settings for the INS²ANE toolkit
Read from INSANE_* environment variables and an optional .env file
"""

import logging
from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Knobs that change how a run executes, never what it computes"""

    model_config = SettingsConfigDict(
        env_prefix="INSANE_", env_file=".env", extra="ignore"
    )

    threads: int = Field(default=1, ge=1, description="Worker threads")
    log_level: str = Field(default="INFO", description="Root log level")
    pairwise_cap: int = Field(
        default=10000,
        ge=2,
        description="Largest population scored by n² novelty methods",
    )


@lru_cache()
def get_settings() -> Settings:
    """Cached settings instance"""
    return Settings()


def configure_logging(level: str = "INFO") -> None:
    """Configure root logging for command-line use"""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
