"""Storage service for datasets, run directories and reports."""

import csv
import hashlib
import json
import subprocess
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

from pydantic import BaseModel, ValidationError

from ..core.config import settings
from ..core.errors import CorruptFileError, DatasetNotFoundError, IoFailureError
from ..core.logging import logger
from ..models.dataset import Dataset, Sample
from ..models.schemas import DatasetManifest, ManifestEntry
from ..tensor import Tensor
from ..tensor.io import read_tensor, write_tensor


MANIFEST_NAME = "manifest.json"
SAMPLES_DIR = "samples"
RUN_CONFIG_NAME = "run_config.json"


def dump_json(payload: Any) -> str:
    """Stable JSON text: sorted keys, two-space indent, trailing newline."""
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


class StorageService:
    """Handle file storage operations."""

    def __init__(self):
        self.data_dir = settings.data_dir
        self.runs_dir = settings.runs_dir

    def write_dataset(self, dataset: Dataset, out_dir: Union[str, Path]) -> Path:
        """Write the manifest and one video/tab tensor pair per sample."""
        out_dir = Path(out_dir)
        samples_dir = out_dir / SAMPLES_DIR
        try:
            samples_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise IoFailureError(str(samples_dir), str(exc)) from exc

        for sample, entry in zip(dataset.samples, dataset.manifest.samples):
            write_tensor(out_dir / entry.video, Tensor(sample.video))
            write_tensor(out_dir / entry.tab, Tensor(sample.tab))

        self.write_text(out_dir / MANIFEST_NAME, dump_json(dataset.manifest))
        logger.info(
            "Dataset written",
            extra={"path": str(out_dir), "samples": len(dataset), "seed": dataset.manifest.seed},
        )
        return out_dir

    def read_manifest(self, data_dir: Union[str, Path]) -> DatasetManifest:
        path = Path(data_dir) / MANIFEST_NAME
        if not path.is_file():
            raise DatasetNotFoundError(str(data_dir))
        try:
            return DatasetManifest.model_validate_json(path.read_text())
        except ValidationError as exc:
            raise CorruptFileError(str(path), str(exc).splitlines()[0]) from exc

    def read_dataset(self, data_dir: Union[str, Path]) -> Dataset:
        """Load a dataset directory; every referenced file must exist and parse."""
        data_dir = Path(data_dir)
        manifest = self.read_manifest(data_dir)
        samples = [self._read_sample(data_dir, entry, manifest.tab_dim) for entry in manifest.samples]
        logger.debug("Dataset loaded", extra={"path": str(data_dir), "samples": len(samples)})
        return Dataset(manifest=manifest, samples=samples)

    def _read_sample(self, data_dir: Path, entry: ManifestEntry, tab_dim: int) -> Sample:
        video = read_tensor(data_dir / entry.video).data
        tab = read_tensor(data_dir / entry.tab).data
        if video.ndim != 4 or video.shape[0] != entry.frames or video.shape[1] != 1:
            raise CorruptFileError(entry.video, f"unexpected video shape {video.shape}")
        if tab.shape != (tab_dim,):
            raise CorruptFileError(entry.tab, f"unexpected tab shape {tab.shape}")
        return Sample(sample_id=entry.id, video=video, tab=tab, target=entry.target)

    def get_run_dir(self, output: Optional[Union[str, Path]], name: str) -> Path:
        """Get or create a run directory (``runs_dir / name`` when no output is given)."""
        run_dir = Path(output) if output else self.runs_dir / name
        try:
            run_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise IoFailureError(str(run_dir), str(exc)) from exc
        return run_dir

    def write_text(self, path: Path, text: str) -> None:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)
        except OSError as exc:
            raise IoFailureError(str(path), str(exc)) from exc

    def write_json(self, path: Path, payload: Any) -> None:
        self.write_text(path, dump_json(payload))

    def read_json(self, path: Path) -> Dict[str, Any]:
        try:
            return json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise DatasetNotFoundError(str(path)) from None
        except (OSError, json.JSONDecodeError) as exc:
            raise CorruptFileError(str(path), str(exc)) from exc

    def write_csv(self, path: Path, columns: Sequence[str], rows: Iterable[Dict[str, Any]]) -> None:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="") as f:
                writer = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n")
                writer.writeheader()
                for row in rows:
                    writer.writerow({key: row.get(key, "") for key in columns})
        except OSError as exc:
            raise IoFailureError(str(path), str(exc)) from exc

    def read_csv(self, path: Path) -> List[Dict[str, str]]:
        try:
            with open(path, newline="") as f:
                return list(csv.DictReader(f))
        except OSError as exc:
            raise IoFailureError(str(path), str(exc)) from exc

    def write_run_config(self, run_dir: Path, run_config: BaseModel) -> None:
        """Echo the parsed command line and build identifier into the run directory."""
        payload = run_config.model_dump(mode="json")
        payload["build"] = self.build_id()
        self.write_json(run_dir / RUN_CONFIG_NAME, payload)

    @staticmethod
    def build_id() -> str:
        """``git describe`` of the source tree, or the package version outside a checkout."""
        try:
            result = subprocess.run(
                ["git", "describe", "--always", "--dirty", "--tags"],
                cwd=Path(__file__).resolve().parent,
                capture_output=True,
                text=True,
                timeout=5,
            )
        except (OSError, subprocess.SubprocessError):
            return settings.app_version
        if result.returncode != 0 or not result.stdout.strip():
            return settings.app_version
        return result.stdout.strip()

    @staticmethod
    def digest(payload: Any) -> str:
        """SHA-256 of the stable JSON rendering of ``payload``."""
        return hashlib.sha256(dump_json(payload).encode("utf-8")).hexdigest()


storage_service = StorageService()
