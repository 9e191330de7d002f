class Request:
    def __init__(self, url, callback=None, meta=None):
        self.url = url
        self.callback = callback
        self.meta = dict(meta or {})


class Response:
    def __init__(self, url, body=b"", headers=None, meta=None):
        self.url = url
        self.body = body
        self.headers = dict(headers or {})
        self.meta = dict(meta or {})

    @property
    def text(self):
        return self.body.decode("utf-8", errors="replace")

    def replace(self, **kwargs):
        for key in ("url", "body", "headers", "meta"):
            kwargs.setdefault(key, getattr(self, key))
        return type(self)(**kwargs)


class XmlResponse(Response):
    pass
