import logging
import re

logger = logging.getLogger(__name__)


def _body_or_str(obj, unicode=True):
    if hasattr(obj, "body"):
        body = obj.body
    else:
        body = obj
    if isinstance(body, bytes) and unicode:
        return body.decode("utf-8")
    return body


def xmliter(obj, nodename):
    """Return an iterator of the raw text of each ``nodename`` element found
    in ``obj``, which may be a response or a string.
    """
    nodename_patt = re.escape(nodename)
    text = _body_or_str(obj)
    r = re.compile(rf"<{nodename_patt}[\s>].*?</{nodename_patt}>", re.DOTALL)
    found = False
    for match in r.finditer(text):
        found = True
        yield match.group()
    if not found:
        logger.warning("No <%s> nodes found in document", nodename)
