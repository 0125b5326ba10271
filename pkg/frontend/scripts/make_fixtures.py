"""Regenerate tests/fixtures from the segmentation service.

The ellipsoid OBJ and its volume figures come through the service's own
HTTP mesh endpoint, so the fixtures are exactly what a browser client
would receive. Requires the backend package installed:

    python3 scripts/make_fixtures.py
"""

import json
import shutil
import tempfile
from pathlib import Path

from starlette.testclient import TestClient

from voxloop import ServiceConfig, create_app
from voxloop.volume import save_mask, save_volume
from voxloop.phantoms import ellipsoid_phantom
from voxloop.profiles import ProfileSet

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        work = Path(tmp)
        volume, mask = ellipsoid_phantom()
        save_volume(volume, work / "ellipsoid.nii.gz")
        save_mask(mask, work / "ellipsoid-mask.nii.gz", spacing=volume.spacing)

        config = ServiceConfig(
            profiles=ProfileSet({}),
            data_dir=work / "sessions",
            volumes_dir=work,
        )
        client = TestClient(create_app(config))
        reply = client.post(
            "/mesh",
            json={
                "mask_path": str(work / "ellipsoid-mask.nii.gz"),
                "volume_path": "ellipsoid.nii.gz",
                "context_threshold": 300.0,
                "out_dir": str(work / "meshes"),
            },
        )
        reply.raise_for_status()
        body = reply.json()

        shutil.copy(work / "meshes" / "lesion.obj", FIXTURES / "ellipsoid.obj")
        (FIXTURES / "ellipsoid.json").write_text(
            json.dumps(
                {
                    "volumes": body["volumes"],
                    "lesion_watertight": body["lesion_watertight"],
                    "spacing": list(volume.spacing),
                },
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
    print(f"fixtures written to {FIXTURES}")


if __name__ == "__main__":
    main()
