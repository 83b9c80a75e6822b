import os
import json
import hashlib
import tempfile
from typing import List, Tuple

import numpy as np

from utils.logger import Logger
from utils.errors import ChecksumError, VersionMismatchError


class FSUtils:
    """
    Utility class for file system operations shared by the managers.

    Provides methods for:
    - Atomic writes (temp file + rename)
    - Content hashing of files, bytes and arrays
    - Self-describing checked containers for model artifacts
    """

    def __init__(self):
        self.logger = Logger()

    def ensure_dir(self, folder_path: str) -> str:
        """Create folder (and parents) if needed and return it."""
        if folder_path:
            os.makedirs(folder_path, exist_ok=True)
        return folder_path

    def atomic_write_text(self, filepath: str, content: str):
        """Write text so readers never observe a partially written file."""
        folder = os.path.dirname(os.path.abspath(filepath))
        self.ensure_dir(folder)
        fd, tmp_path = tempfile.mkstemp(dir=folder, prefix='.tmp-', suffix='.part')
        try:
            with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
                f.write(content)
            os.replace(tmp_path, filepath)
        except Exception:
            if os.path.exists(tmp_path):
                os.remove(tmp_path)
            raise

    def file_sha256(self, filepath: str) -> str:
        """Hex digest of a file's bytes."""
        digest = hashlib.sha256()
        with open(filepath, 'rb') as f:
            for chunk in iter(lambda: f.read(1 << 20), b''):
                digest.update(chunk)
        return digest.hexdigest()

    def write_container(self, filepath: str, magic: str, version: int, payload: dict):
        """
        Write a checked container.

        Layout: magic line, ``version: N`` line, ``sha256: <hex>`` line, then the
        JSON payload. The digest covers the payload bytes only.
        """
        body = json.dumps(payload, sort_keys=True, indent=1)
        digest = hashlib.sha256(body.encode('utf-8')).hexdigest()
        self.atomic_write_text(filepath, f"{magic}\nversion: {version}\nsha256: {digest}\n{body}")

    def read_container(self, filepath: str, magic: str, version: int) -> dict:
        """
        Read a checked container written by ``write_container``.

        Raises:
            ChecksumError: wrong magic, malformed header or digest mismatch
            VersionMismatchError: container written by another format version
        """
        with open(filepath, 'r', encoding='utf-8', newline='') as f:
            content = f.read()

        parts = content.split('\n', 3)
        if len(parts) < 4 or parts[0] != magic:
            raise ChecksumError(f"{filepath} is not a {magic} container")
        try:
            found_version = int(parts[1].split(':', 1)[1])
            expected_digest = parts[2].split(':', 1)[1].strip()
        except (IndexError, ValueError):
            raise ChecksumError(f"{filepath}: malformed container header")

        if found_version != version:
            raise VersionMismatchError(
                f"{filepath}: format version {found_version}, expected {version}"
            )

        body = parts[3]
        if hashlib.sha256(body.encode('utf-8')).hexdigest() != expected_digest:
            raise ChecksumError(f"{filepath}: checksum mismatch")
        return json.loads(body)


def sha256_hex(*chunks) -> str:
    """Digest of a sequence of str/bytes/ndarray chunks."""
    digest = hashlib.sha256()
    for chunk in chunks:
        if isinstance(chunk, np.ndarray):
            digest.update(np.ascontiguousarray(chunk, dtype=np.float64).tobytes())
        elif isinstance(chunk, str):
            digest.update(chunk.encode('utf-8'))
        else:
            digest.update(chunk)
        # separator so ("ab", "c") and ("a", "bc") differ
        digest.update(b'\x1f')
    return digest.hexdigest()


def encode_floats(values) -> List[str]:
    """Exact binary64 encoding (hex floats) for JSON payloads."""
    return [float(v).hex() for v in np.asarray(values, dtype=np.float64).ravel()]


def decode_floats(encoded: List[str]) -> np.ndarray:
    return np.array([float.fromhex(v) for v in encoded], dtype=np.float64)


def split_header(line: str) -> Tuple[str, dict]:
    """Parse a ``# key=value;key=value`` comment header line."""
    text = line.lstrip('#').strip()
    fields = {}
    for item in text.split(';'):
        if '=' in item:
            key, value = item.split('=', 1)
            fields[key.strip()] = value.strip()
    return text, fields
