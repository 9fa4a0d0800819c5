"""file and batching helpers shared by the pipeline stages"""
import hashlib
import json
import os
import tempfile
from contextlib import contextmanager


@contextmanager
def atomic_path(path):
    """yields a temporary path in the target directory, moved over `path` on success"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix='.tmp-', dir=directory)
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def atomic_write(path, data):
    mode = 'wb' if isinstance(data, bytes) else 'w'
    with atomic_path(path) as tmp:
        with open(tmp, mode) as f:
            f.write(data)


def canonical_json(d):
    return json.dumps(d, sort_keys=True, indent=2, default=str) + '\n'


def file_hash(path):
    h = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            h.update(chunk)
    return h.hexdigest()


def text_hash(text):
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def batches(items, size):
    """consecutive slices of at most `size` items"""
    if size < 1:
        raise ValueError('batch size must be positive, got {}'.format(size))
    for start in range(0, len(items), size):
        yield items[start:start + size]
