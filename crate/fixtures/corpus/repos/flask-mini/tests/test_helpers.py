import os

import pytest

import flask
from flask.helpers import NotFound
from flask.helpers import send_file
from flask.helpers import send_from_directory


class TestSendfile:
    def test_send_file(self, tmp_path):
        target = tmp_path / "hello.txt"
        target.write_bytes(b"hello")
        assert send_file(os.fspath(target)) == b"hello"

    def test_send_from_directory(self, tmp_path):
        (tmp_path / "hello.txt").write_bytes(b"hi")
        assert send_from_directory(tmp_path, "hello.txt") == b"hi"
        assert flask.send_from_directory(tmp_path, "hello.txt") == b"hi"

    def test_send_from_directory_escape(self, tmp_path):
        with pytest.raises(NotFound):
            send_from_directory(tmp_path, "../secret.txt")
