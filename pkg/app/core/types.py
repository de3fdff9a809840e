from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.errors import InvalidArgument


class Role(str, Enum):
    SERVER = "server"
    AUDITOR = "auditor"


class TokenPayload(BaseModel):
    sub: str
    role: Role
    iss: str
    aud: str
    exp: int
    iat: int


class Variant(str, Enum):
    TWO_SERVER = "two_server"
    MULTI_SERVER = "multi_server"


class AuditRole(str, Enum):
    A = "A"
    B = "B"


class Phase(str, Enum):
    T = "t"
    U = "u"


class RejectReason(str, Enum):
    PARSE = "parse"
    AUDIT = "audit"
    PROOF = "proof"
    EPOCH = "epoch"
    REPLAY = "replay"
    TIMEOUT = "timeout"
    PROTOCOL = "protocol"

    @property
    def code(self) -> int:
        return _REASON_CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "RejectReason":
        for reason, value in _REASON_CODES.items():
            if value == code:
                return reason
        raise InvalidArgument(f"Unknown reject reason code: {code}")


_REASON_CODES = {
    RejectReason.PARSE: 1,
    RejectReason.AUDIT: 2,
    RejectReason.PROOF: 3,
    RejectReason.EPOCH: 4,
    RejectReason.REPLAY: 5,
    RejectReason.TIMEOUT: 6,
    RejectReason.PROTOCOL: 7,
}


class Verdict(BaseModel):
    model_config = ConfigDict(frozen=True)

    accepted: bool
    reason: Optional[RejectReason] = None
    detail: Optional[str] = None

    @classmethod
    def accept(cls) -> "Verdict":
        return cls(accepted=True)

    @classmethod
    def reject(cls, reason: RejectReason, detail: Optional[str] = None) -> "Verdict":
        return cls(accepted=False, reason=reason, detail=detail)


class Geometry(BaseModel):
    """Table of `rows` entries laid out as an x-by-y matrix, index = ix*y + iy."""

    model_config = ConfigDict(frozen=True)

    rows: int = Field(ge=1)
    x: int = Field(ge=1)
    y: int = Field(ge=1)
    row_bytes: int = Field(ge=1)

    @model_validator(mode="after")
    def _covers_table(self):
        if self.x * self.y < self.rows:
            raise ValueError(f"x*y = {self.x * self.y} does not cover {self.rows} rows")
        return self

    def split(self, index: int) -> tuple[int, int]:
        if not 0 <= index < self.rows:
            raise InvalidArgument(f"Index {index} outside table of {self.rows} rows")
        return divmod(index, self.y)


class EpochState(str, Enum):
    OPEN = "open"
    CLOSING = "closing"
    REVEALED = "revealed"
    HALTED = "halted"


class EpochPolicy(BaseModel):
    threshold: Optional[int] = Field(default=None, ge=1)
    duration_s: Optional[float] = Field(default=None, gt=0)


class EpochConfig(BaseModel):
    policy: EpochPolicy = Field(default_factory=EpochPolicy)
    geometry: Geometry
    variant: Variant = Variant.TWO_SERVER
    recovery: bool = False
    n_servers: int = Field(default=2, ge=2)
    group: str = "p256"

    @model_validator(mode="after")
    def _variant_rules(self):
        if self.variant == Variant.TWO_SERVER and self.n_servers != 2:
            raise ValueError("The audited variant runs exactly two database servers")
        if self.variant == Variant.MULTI_SERVER and self.recovery:
            raise ValueError("Recovery coding applies to the two-server variant only")
        if self.geometry.rows < 2:
            raise ValueError("Row 0 is reserved; the table needs at least two rows")
        return self


class CellStatus(str, Enum):
    EMPTY = "empty"
    SINGLE = "single"
    PAIR = "pair"
    UNRECOVERABLE = "unrecoverable"


class RevealRecord(BaseModel):
    row: int
    status: CellStatus
    message: str = ""


class EpochReport(BaseModel):
    epoch_id: int
    rows: int
    records: List[RevealRecord] = Field(default_factory=list)
    empty: int = 0
    single: int = 0
    pair: int = 0
    unrecoverable: int = 0
    cover_nonempty: bool = False
    accepted: int = 0
    rejected: int = 0
    rejected_by_reason: Dict[str, int] = Field(default_factory=dict)

    def messages(self) -> List[bytes]:
        return [bytes.fromhex(r.message) for r in self.records if r.status != CellStatus.UNRECOVERABLE]


class MutationStrategy(str, Enum):
    RANDOM = "random"
    BITFLIP = "bitflip"
    INDEX_TAMPER = "index_tamper"
    V_CORRUPT = "v_corrupt"
    ZERO_MESSAGE = "zero_message"
    RANDOM_BYTES = "random_bytes"
    DROP_PEER = "drop_peer"


class SimSpec(BaseModel):
    n_clients: int = Field(default=0, ge=0)
    malicious_fraction: float = Field(default=0.0, ge=0.0, le=1.0)
    strategy: MutationStrategy = MutationStrategy.RANDOM
    cover_clients: int = Field(default=0, ge=0)
    epochs: int = Field(default=1, ge=1)
    rows: int = Field(default=64, ge=2)
    row_bytes: int = Field(default=32, ge=4)
    variant: Variant = Variant.TWO_SERVER
    recovery: bool = False
    group: str = "schnorr64"
    n_servers: int = Field(default=2, ge=2)
    threshold: Optional[int] = Field(default=None, ge=1)
    latency_ms: float = Field(default=0.0, ge=0.0)
    submit_interval_ms: float = Field(default=1.0, ge=0.0)
    audit_timeout_s: float = Field(default=30.0, gt=0)
    seed: int = 0
    stress: bool = False
    workers: int = Field(default=4, ge=1)


class SimulationResult(BaseModel):
    seed: int
    reports: List[EpochReport] = Field(default_factory=list)
    honest_writers: int = 0
    honest_delivered: int = 0
    malicious_requests: int = 0
    malicious_accepted: int = 0
    cover_requests: int = 0
    rejected: int = 0
    success_rate: float = 0.0


class LatencyPercentiles(BaseModel):
    p50_ms: float
    p90_ms: float
    p99_ms: float


class BenchReport(BaseModel):
    host: Dict[str, str]
    rows: int
    row_bytes: int
    x: int
    y: int
    duration_s: float
    requests: int
    accepted: int
    accepted_per_s: float
    eval_full_bytes_per_s: float
    audit_latency: LatencyPercentiles
    prg_bytes_per_s: float
    ceiling_requests_per_s: float
