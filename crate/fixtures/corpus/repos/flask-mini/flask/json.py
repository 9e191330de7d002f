import json as _json


def dumps(obj, **kwargs):
    return _json.dumps(obj, **kwargs)


def loads(s, **kwargs):
    return _json.loads(s, **kwargs)
