from __future__ import annotations

import os
import typing as t


class NotFound(Exception):
    code = 404


def abort(code: int, *args: t.Any, **kwargs: t.Any) -> t.NoReturn:
    raise NotFound(code, *args)


def url_for(endpoint: str, *, _external: bool | None = None, **values: t.Any) -> str:
    query = "&".join(f"{k}={v}" for k, v in sorted(values.items()))
    prefix = "http://localhost" if _external else ""
    return f"{prefix}/{endpoint}" + (f"?{query}" if query else "")


def send_file(path_or_file, mimetype: str | None = None, max_age=None):
    with open(path_or_file, "rb") as f:
        return f.read()


def send_from_directory(
    directory: os.PathLike[str] | str,
    path: os.PathLike[str] | str,
    **kwargs: t.Any,
):
    """Send a file from within a directory using :func:`send_file`.

    :param directory: The directory that ``path`` must be located under.
    :param path: The path to the file to send, relative to ``directory``.
    """
    full = os.path.join(os.fspath(directory), os.fspath(path))
    if not os.path.abspath(full).startswith(os.path.abspath(directory)):
        abort(404)
    if not os.path.isfile(full):
        abort(404)
    return send_file(full, **kwargs)
