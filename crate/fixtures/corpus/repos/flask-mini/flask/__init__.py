from . import json as json
from .app import Flask as Flask
from .helpers import abort as abort
from .helpers import send_file as send_file
from .helpers import send_from_directory as send_from_directory
from .helpers import url_for as url_for

__version__ = "3.0.0"
