"""Configuration management for the DeepRacing testbed."""

import logging
import os
from dataclasses import dataclass

from dotenv import load_dotenv

from .errors import InvalidArgumentError

# Load environment variables
load_dotenv()

DEFAULT_TELEMETRY_HOST = "127.0.0.1"
DEFAULT_TELEMETRY_PORT = 20777

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def parse_address(value: str) -> tuple[str, int]:
    """Parse a ``host:port`` string.

    Args:
        value: Address such as ``127.0.0.1:20777``

    Returns:
        (host, port) tuple

    Raises:
        InvalidArgumentError: If the value is not ``host:port`` with a valid port
    """
    host, sep, port_text = value.strip().rpartition(":")
    if not sep or not host:
        raise InvalidArgumentError(f"expected host:port, got {value!r}")
    try:
        port = int(port_text)
    except ValueError:
        raise InvalidArgumentError(f"invalid port in {value!r}") from None
    if not 0 <= port <= 65535:
        raise InvalidArgumentError(f"port out of range in {value!r}")
    return host, port


@dataclass
class TestbedConfig:
    """Environment-level settings shared by the CLI and the MCP server."""

    __test__ = False

    telemetry_host: str
    telemetry_port: int
    output_dir: str
    log_level: str

    @classmethod
    def from_env(cls) -> "TestbedConfig":
        """Create configuration from environment variables."""
        addr = os.getenv("DEEPRACING_TELEMETRY_ADDR")
        if addr:
            host, port = parse_address(addr)
        else:
            host, port = DEFAULT_TELEMETRY_HOST, DEFAULT_TELEMETRY_PORT
        return cls(
            telemetry_host=host,
            telemetry_port=port,
            output_dir=os.getenv("DEEPRACING_OUTPUT_DIR", "runs"),
            log_level=os.getenv("LOG_LEVEL", "INFO").upper(),
        )

    @property
    def telemetry_address(self) -> tuple[str, int]:
        return self.telemetry_host, self.telemetry_port


def configure_logging(level: str | None = None) -> None:
    """Configure root logging once for an entry point."""
    logging.basicConfig(
        level=getattr(logging, (level or config.log_level).upper(), logging.INFO),
        format=LOG_FORMAT,
    )


# Global configuration instance
config = TestbedConfig.from_env()
