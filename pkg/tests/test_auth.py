import pytest
from fastapi import HTTPException

from app.config import Settings
from app.core.types import Role
from app.security import create_mesh_token, decode_token, require_sender


CFG = Settings(_env_file=None, mesh_secret="auth-test-secret")


def test_create_and_decode_token():
    """Test mesh token creation and decoding."""
    token = create_mesh_token("server-1", Role.SERVER, CFG)
    assert isinstance(token, str)
    assert len(token) > 0

    payload = decode_token(token, CFG)
    assert payload.sub == "server-1"
    assert payload.role == Role.SERVER
    assert payload.aud == CFG.jwt_aud


def test_expired_token():
    """Test an expired token is refused with 401."""
    cfg = Settings(_env_file=None, mesh_secret="auth-test-secret", jwt_expiration_hours=-1)
    with pytest.raises(HTTPException) as exc:
        decode_token(create_mesh_token("auditor", Role.AUDITOR, cfg), CFG)
    assert exc.value.status_code == 401
    assert exc.value.detail == "Token has expired"


def test_invalid_token():
    """Test invalid token raises exception."""
    with pytest.raises(HTTPException):
        decode_token("invalid-token-string", CFG)

    other = Settings(_env_file=None, mesh_secret="another-secret")
    with pytest.raises(HTTPException) as exc:
        decode_token(create_mesh_token("server-0", Role.SERVER, other), CFG)
    assert exc.value.detail == "Invalid token"


def test_require_sender():
    """Test the token subject must match the claimed sender."""
    payload = decode_token(create_mesh_token("server-0", Role.SERVER, CFG), CFG)
    require_sender(payload, "server-0")
    with pytest.raises(HTTPException) as exc:
        require_sender(payload, "server-1")
    assert exc.value.status_code == 403
