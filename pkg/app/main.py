import ssl
import sys
import time
from contextlib import asynccontextmanager
from typing import Optional

import uvicorn
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from loguru import logger

from app.adapters.mesh import NodeRuntime, build_runtime, server_ssl_kwargs
from app.config import Settings, settings as default_settings
from app.core.types import Role
from app.routers import epoch, frames, health, metrics


def configure_logging(cfg: Settings):
    logger.remove()
    logger.add(
        sys.stdout,
        format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan> - <level>{message}</level>",
        level=cfg.log_level,
    )

    if cfg.log_path:
        logger.add(
            cfg.log_path,
            rotation=cfg.log_rotation_size,
            retention=f"{cfg.log_retention_days} days",
            level="DEBUG",
        )


def check_production(cfg: Settings):
    if cfg.production_mode:
        if cfg.mesh_secret == "changeme":
            logger.critical("FATAL: Cannot start in PRODUCTION_MODE with default MESH_SECRET!")
            logger.critical("Set a secure RIPOSTE_MESH_SECRET in the config file")
            raise RuntimeError("Production mode requires custom MESH_SECRET")

        if not (cfg.tls_enabled and cfg.tls_ca):
            logger.critical("FATAL: Cannot start in PRODUCTION_MODE without TLS credentials!")
            logger.critical("Set RIPOSTE_TLS_CERT, RIPOSTE_TLS_KEY and RIPOSTE_TLS_CA")
            raise RuntimeError("Production mode requires TLS")

        logger.info("✓ Production security checks passed")
    else:
        if cfg.mesh_secret == "changeme":
            logger.warning("⚠️  MESH_SECRET is using default value (acceptable for development)")

        if not cfg.tls_enabled:
            logger.warning("⚠️  TLS is DISABLED - mesh traffic is plaintext (acceptable for development)")


def create_app(cfg: Optional[Settings] = None, runtime: Optional[NodeRuntime] = None) -> FastAPI:
    cfg = cfg or default_settings

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        logger.info("=" * 60)
        logger.info("Riposte Node - Starting")
        logger.info("=" * 60)
        logger.info(f"Role: {cfg.role.value}")
        logger.info(f"Node: {cfg.node_id}")
        logger.info(f"PRODUCTION_MODE: {cfg.production_mode}")
        logger.info(f"Bind: {cfg.bind}:{cfg.port}")
        if cfg.role == Role.SERVER:
            geometry = cfg.geometry
            policy = cfg.epoch_policy
            logger.info(f"Variant: {cfg.variant.value} ({cfg.n_servers} servers, group {cfg.group})")
            logger.info(f"Table: {geometry.rows} rows as {geometry.x}x{geometry.y}, {cfg.row_bytes}B rows")
            logger.info(f"Epoch policy: threshold={policy.threshold}, duration_s={policy.duration_s}")

        check_production(cfg)

        if app.state.runtime is None:
            app.state.runtime = build_runtime(cfg)
        app.state.runtime.start()
        app.state.started_at = time.monotonic()

        logger.info("=" * 60)

        yield

        await app.state.runtime.stop()
        logger.info("Riposte Node - Shutting down")

    app = FastAPI(
        title="Riposte Node API",
        description="Servidor y auditor del tablón anónimo de escritura privada",
        version="1.0.0",
        lifespan=lifespan,
    )
    app.state.settings = cfg
    app.state.runtime = runtime
    app.state.started_at = time.monotonic()

    @app.middleware("http")
    async def require_tls(request: Request, call_next):
        if cfg.require_tls and request.url.scheme != "https":
            logger.warning(f"Refused plaintext request from {request.client.host if request.client else '?'}")
            return JSONResponse(status_code=403, content={"detail": "TLS required"})
        return await call_next(request)

    app.include_router(health.router)
    app.include_router(metrics.router)
    app.include_router(epoch.router)
    app.include_router(frames.router)

    @app.exception_handler(Exception)
    async def global_exception_handler(request: Request, exc: Exception):
        logger.error(f"Global exception: {exc}", exc_info=True)
        return JSONResponse(
            status_code=500,
            content={"detail": "Internal server error"},
        )

    return app


def run_node(cfg: Settings):
    """Serve the node over TLS 1.3 with client certificates when credentials are configured."""
    configure_logging(cfg)
    config = uvicorn.Config(
        create_app(cfg),
        host=cfg.bind,
        port=cfg.port,
        log_level=cfg.log_level.lower(),
        **server_ssl_kwargs(cfg),
    )
    config.load()
    if config.ssl is not None:
        config.ssl.minimum_version = ssl.TLSVersion.TLSv1_3
    uvicorn.Server(config).run()


app = create_app()


if __name__ == "__main__":
    run_node(default_settings)
