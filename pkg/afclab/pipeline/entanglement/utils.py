import hashlib
import json
import logging
import os

logger = logging.getLogger(__name__)


def banner(title: str):
    logger.info("######################################################")
    logger.info(f"# {title}")
    logger.info("######################################################")


def ensure_folder(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def save_data_json(full_path, data):
    with open(full_path, "w") as out_file:
        json.dump(data, out_file, sort_keys=True, indent=2)


def hashcode_sha256(data: bytes) -> str:
    hash_obj = hashlib.sha256()
    hash_obj.update(data)
    return hash_obj.hexdigest()


def hash_file(full_path: str) -> str:
    with open(full_path, "rb") as f:
        return hashcode_sha256(f.read())


def prun(func, reraise=False, **kwargs):
    """
    Run a stage, log any exception with its traceback. Returns None on
    failure unless reraise is set.
    """
    try:
        return func(**kwargs)

    except Exception as e:
        logger.exception(f"[ERROR] Exception from prun: {e}")
        if reraise:
            raise
        return None


def to_plain(obj):
    """numpy scalars/arrays and tuples -> plain python, for json/yaml dumps"""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if hasattr(obj, "tolist"):
        return to_plain(obj.tolist())
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj
