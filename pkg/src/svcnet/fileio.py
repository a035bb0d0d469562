"""Small file helpers: atomic text writes and exact float formatting."""

import os
import tempfile


def fmt_float(v):
    """Full-precision decimal string that round-trips exactly through float()."""
    return repr(float(v))


def atomic_write_text(path, text):
    """Write text to path so that a failure never leaves a partial file."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
