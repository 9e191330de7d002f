from __future__ import annotations

import typing as t

from .helpers import send_from_directory


class Flask:
    default_config = {"SEND_FILE_MAX_AGE_DEFAULT": None}

    def __init__(self, import_name: str, static_folder: str | None = "static"):
        self.import_name = import_name
        self.static_folder = static_folder
        self.config = dict(self.default_config)

    @property
    def has_static_folder(self) -> bool:
        return self.static_folder is not None

    def get_send_file_max_age(self, filename: str | None) -> int | None:
        value = self.config["SEND_FILE_MAX_AGE_DEFAULT"]
        if value is None:
            return None
        return int(value)

    def send_static_file(self, filename: str):
        """The view function used to serve files from
        :attr:`static_folder`.
        """
        if not self.has_static_folder:
            raise RuntimeError("'static_folder' must be set to serve static_files.")

        # send_file only knows to call get_send_file_max_age on the app,
        # call it here so it works for blueprints too.
        max_age = self.get_send_file_max_age(filename)
        return send_from_directory(
            t.cast(str, self.static_folder), filename, max_age=max_age
        )
