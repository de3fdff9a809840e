#!/usr/bin/env python3
"""
Print a mesh token for the node described by a config file.
Only use in development environments.
"""
import argparse
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.config import load_settings
from app.security import create_mesh_token

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="Node config file (RIPOSTE_* keys).")
    args = ap.parse_args()

    cfg = load_settings(args.config)
    if cfg.production_mode:
        print("ERROR: PRODUCTION_MODE is enabled. This script only works in development.")
        sys.exit(1)

    token = create_mesh_token(cfg.node_id, cfg.role, cfg)
    scheme = "https" if cfg.tls_enabled else "http"

    print("=" * 60)
    print(f"Mesh token for: {cfg.node_id}")
    print(f"Role: {cfg.role.value}")
    print("=" * 60)
    print(token)
    print("=" * 60)
    print(f"\nExport as environment variable:")
    print(f'export TOKEN="{token}"')
    print(f"\nUse in curl:")
    print(f'curl -H "Authorization: Bearer {token}" {scheme}://localhost:{cfg.port}/api/metrics')
    print("=" * 60)
