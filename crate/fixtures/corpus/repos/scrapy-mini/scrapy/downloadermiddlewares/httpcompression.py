import warnings
from logging import getLogger

from scrapy.http import Response
from scrapy.utils._compression import _DecompressionMaxSizeExceeded
from scrapy.utils.gz import gunzip

logger = getLogger(__name__)

ACCEPTED_ENCODINGS = [b"gzip", b"deflate"]


class HttpCompressionMiddleware:
    """This middleware allows compressed (gzip, deflate) traffic to be
    sent/received from web sites"""

    def __init__(self, max_size=0, warn_size=0):
        self._max_size = max_size
        self._warn_size = warn_size

    def process_request(self, request, spider):
        request.headers.setdefault("Accept-Encoding", b", ".join(ACCEPTED_ENCODINGS))

    def process_response(self, request, response, spider):
        if request.method == "HEAD":
            return response
        if isinstance(response, Response):
            content_encoding = response.headers.get("Content-Encoding", [])
            if content_encoding:
                encoding = content_encoding.pop()
                max_size = request.meta.get("download_maxsize", self._max_size)
                try:
                    decoded_body = self._decode(response.body, encoding.lower(), max_size)
                except _DecompressionMaxSizeExceeded:
                    raise ValueError(
                        f"Ignored response {response} because its body "
                        f"({len(response.body)} B compressed) exceeded "
                        f"DOWNLOAD_MAXSIZE ({max_size} B) during decompression."
                    )
                if len(response.body) < self._warn_size <= len(decoded_body):
                    warnings.warn(
                        f"{response} body size after decompression "
                        f"({len(decoded_body)} B) is larger than the download "
                        f"warning size ({self._warn_size} B)."
                    )
                response = response.replace(body=decoded_body)
        return response

    def _decode(self, body: bytes, encoding: bytes, max_size: int) -> bytes:
        if encoding == b"gzip" or encoding == b"x-gzip":
            body = gunzip(body, max_size=max_size)
        return body
