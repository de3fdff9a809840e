import jwt
from datetime import datetime, timedelta, timezone
from typing import Optional
from fastapi import HTTPException, status
from app.core.types import Role, TokenPayload
from app.config import Settings, settings as default_settings
from loguru import logger


def create_mesh_token(subject: str, role: Role, cfg: Optional[Settings] = None) -> str:
    """Create a bearer token a node presents on the server mesh."""
    cfg = cfg or default_settings
    now = datetime.now(timezone.utc)
    exp = now + timedelta(hours=cfg.jwt_expiration_hours)

    payload = {
        "sub": subject,
        "role": role.value,
        "iss": cfg.jwt_iss,
        "aud": cfg.jwt_aud,
        "exp": int(exp.timestamp()),
        "iat": int(now.timestamp()),
    }

    return jwt.encode(payload, cfg.mesh_secret, algorithm=cfg.jwt_algorithm)


def decode_token(token: str, cfg: Optional[Settings] = None) -> TokenPayload:
    """Decode and validate a mesh token."""
    cfg = cfg or default_settings
    try:
        payload = jwt.decode(
            token,
            cfg.mesh_secret,
            algorithms=[cfg.jwt_algorithm],
            audience=cfg.jwt_aud,
            issuer=cfg.jwt_iss,
        )

        return TokenPayload(
            sub=payload["sub"],
            role=Role(payload["role"]),
            iss=payload["iss"],
            aud=payload["aud"],
            exp=payload["exp"],
            iat=payload["iat"],
        )
    except jwt.ExpiredSignatureError:
        raise HTTPException(
            status_code=status.HTTP_401_UNAUTHORIZED,
            detail="Token has expired",
        )
    except (jwt.InvalidTokenError, KeyError, ValueError) as e:
        logger.error(f"Invalid token: {e}")
        raise HTTPException(
            status_code=status.HTTP_401_UNAUTHORIZED,
            detail="Invalid token",
        )


def require_sender(token_payload: TokenPayload, sender: str):
    """The token subject must be the node id the frame claims to come from."""
    if token_payload.sub != sender:
        raise HTTPException(
            status_code=status.HTTP_403_FORBIDDEN,
            detail="Token subject does not match sender",
        )
