import json
import logging
import os
from typing import Iterator, Mapping

from .errors import DuplicateRecordError, StoreError
from .imageio import write_pgm
from .raster import GrayImage

RECORDS_FILE = "records.jsonl"
BLOBS_DIR = "blobs"


class RecordStore:
    """Handles the file-based store of processed documents.

    This module provides the `RecordStore` class, which persists one entry per
    processed identity document: its JSON record plus the two image fields,
    the cropped photo ID and the personal (face) photo.

    Architecture and Design
    -----------------------
    - **Directory Structure:** A store directory (configurable by `store_dir`
      in `config.yaml` or by `idpipe process --out`) contains one
      `records.jsonl` file and a `blobs/` tree with one subdirectory per
      record id (e.g., `out/blobs/01J9.../photo_id.pgm` and `face.pgm`).

    - **Data Format:** Each line of `records.jsonl` is one JSON object with
      the DocumentRecord fields. Blob fields hold paths relative to the store
      directory.

    Workflow
    --------
    1.  **Blob writing:** `write_record()` first writes every blob file.
    2.  **Record append:** Only then the JSON line is appended with a single
        `os.write` on a descriptor opened with `O_APPEND`. A crash between the
        two steps leaves orphan blobs, never a partial line.
    3.  **Reading:** `read_records()` iterates the parsed lines, skipping and
        logging malformed ones; `hit()` answers whether an id is stored.

    Concurrency
    -----------
    - Single writer per store. Readers may tail `records.jsonl` while a writer
      appends.
    - Records are never rewritten; the store is cleared by deleting the
      directory.
    """

    def __init__(self, store_dir: str, app_logger: logging.Logger) -> None:
        self.store_dir = store_dir
        self.records_path = os.path.join(store_dir, RECORDS_FILE)
        self.app_logger = app_logger
        try:
            os.makedirs(os.path.join(store_dir, BLOBS_DIR), exist_ok=True)
        except OSError as e:
            raise StoreError(f"Cannot create store directory {store_dir}: {e}") from e
        self._ids = {rec.get("id") for rec in self.read_records()}

    def blob_path(self, record_id: str, name: str) -> str:
        """Path of a blob relative to the store directory."""
        return os.path.join(BLOBS_DIR, record_id, f"{name}.pgm")

    def hit(self, record_id: str) -> bool:
        return record_id in self._ids

    def write_record(
        self, record_id: str, payload: Mapping, blobs: Mapping[str, GrayImage]
    ) -> int:
        """
        Writes the blobs of a record, then appends its JSON line.

        Args:
            record_id: The unique id of the record.
            payload: The JSON-serialisable record; blob paths are added to it.
            blobs: Images keyed by blob name (``photo_id``, ``face``).

        Returns:
            The 0-based position of the appended line.

        Raises:
            DuplicateRecordError: If the id is already stored.
            StoreError: If a blob or the line cannot be written.
        """
        if self.hit(record_id):
            raise DuplicateRecordError(f"Record {record_id} is already in {self.store_dir}.")
        entry = dict(payload)
        for name, image in blobs.items():
            rel = self.blob_path(record_id, name)
            try:
                write_pgm(image, os.path.join(self.store_dir, rel))
            except OSError as e:
                self.app_logger.error(f"Failed to write blob {rel}: {e}")
                raise StoreError(f"Failed to write blob {rel}: {e}") from e
            entry[f"{name}_blob"] = rel

        try:
            line = (json.dumps(entry, sort_keys=True) + "\n").encode()
        except (TypeError, ValueError) as e:
            raise StoreError(f"Record {record_id} is not JSON serialisable: {e}") from e

        try:
            fd = os.open(self.records_path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
            try:
                written = os.write(fd, line)
            finally:
                os.close(fd)
        except OSError as e:
            self.app_logger.error(f"Failed to append record {record_id}: {e}")
            raise StoreError(f"Failed to append record {record_id}: {e}") from e
        if written != len(line):
            raise StoreError(f"Short write appending record {record_id}: {written} of {len(line)} bytes.")

        self._ids.add(record_id)
        position = len(self._ids) - 1
        self.app_logger.info(f"Stored record {record_id} at position {position}.")
        return position

    def read_records(self) -> Iterator[dict]:
        if not os.path.exists(self.records_path):
            return
        with open(self.records_path, "r") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    self.app_logger.warning(f"Skipping malformed line {lineno} of {self.records_path}: {e}")
                    continue
                if not isinstance(record, dict):
                    self.app_logger.warning(f"Skipping non-object line {lineno} of {self.records_path}")
                    continue
                yield record
