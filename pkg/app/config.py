from typing import List, Optional

from pydantic_settings import BaseSettings, SettingsConfigDict

from app.core.registry import AUDITOR_ID, server_id
from app.core.types import EpochConfig, EpochPolicy, Geometry, Role, Variant
from app.services.client import ClientConfig
from app.services.payloads import plan_geometry
from app.services.server import NodeOptions


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="RIPOSTE_", env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )

    role: Role = Role.SERVER
    node_index: int = 0

    bind: str = "0.0.0.0"
    port: int = 8443

    servers: str = ""
    auditor: str = ""

    variant: Variant = Variant.TWO_SERVER
    rows: int = 1024
    row_bytes: int = 32
    recovery: bool = False
    group: str = "p256"

    # 0 disables the corresponding close policy
    epoch_threshold: int = 0
    epoch_duration_s: float = 0.0

    audit_timeout_s: float = 30.0
    close_retries: int = 3
    close_backoff_s: float = 1.0

    mesh_secret: str = "changeme"
    jwt_iss: str = "riposte"
    jwt_aud: str = "mesh"
    jwt_algorithm: str = "HS256"
    jwt_expiration_hours: int = 24

    tls_cert: str = ""
    tls_key: str = ""
    tls_ca: str = ""
    require_tls: bool = False

    data_dir: str = ""
    log_path: str = "logs/riposte.log"
    audit_log_path: str = "logs/audit.jsonl"
    log_rotation_size: str = "10 MB"
    log_retention_days: int = 30
    log_level: str = "INFO"

    production_mode: bool = False

    @property
    def servers_list(self) -> List[str]:
        return [url.strip().rstrip("/") for url in self.servers.split(",") if url.strip()]

    @property
    def n_servers(self) -> int:
        return max(len(self.servers_list), 2)

    @property
    def geometry(self) -> Geometry:
        return plan_geometry(self.rows, self.row_bytes, self.variant, self.recovery, self.group)

    @property
    def epoch_policy(self) -> EpochPolicy:
        return EpochPolicy(
            threshold=self.epoch_threshold or None,
            duration_s=self.epoch_duration_s or None,
        )

    @property
    def epoch_config(self) -> EpochConfig:
        return EpochConfig(
            policy=self.epoch_policy,
            geometry=self.geometry,
            variant=self.variant,
            recovery=self.recovery,
            n_servers=self.n_servers,
            group=self.group,
        )

    @property
    def node_id(self) -> str:
        return AUDITOR_ID if self.role == Role.AUDITOR else server_id(self.node_index)

    @property
    def tls_enabled(self) -> bool:
        return bool(self.tls_cert and self.tls_key)

    def node_options(self) -> NodeOptions:
        return NodeOptions(
            index=self.node_index,
            config=self.epoch_config,
            audit_timeout_s=self.audit_timeout_s,
            close_retries=self.close_retries,
            close_backoff_s=self.close_backoff_s,
            data_dir=self.data_dir or None,
            audit_log_path=self.audit_log_path or None,
        )

    def client_config(self) -> ClientConfig:
        return ClientConfig(
            servers=self.servers_list,
            auditor=(self.auditor or None) if self.variant == Variant.TWO_SERVER else None,
            epoch=self.epoch_config,
            timeout_s=self.audit_timeout_s * 2,
        )


def load_settings(path: Optional[str] = None) -> Settings:
    """Settings from a key-value config file; process environment still wins."""
    if path is None:
        return Settings()
    return Settings(_env_file=path)


settings = Settings()
