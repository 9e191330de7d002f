import re
from typing import Any, Dict, Iterator, List, Optional
from urllib.parse import urljoin

_LOC_RE = re.compile(r"<loc>\s*(.*?)\s*</loc>", re.DOTALL)


class Sitemap:
    """Class to parse Sitemap (type=urlset) and Sitemap Index
    (type=sitemapindex) files"""

    def __init__(self, xmltext: bytes):
        text = xmltext.decode("utf-8", errors="replace")
        self.type = "sitemapindex" if "<sitemapindex" in text else "urlset"
        self._locs: List[str] = _LOC_RE.findall(text)

    def __iter__(self) -> Iterator[Dict[str, Any]]:
        for loc in self._locs:
            yield {"loc": loc}


def sitemap_urls_from_robots(robots_text: str, base_url: Optional[str] = None) -> Iterator[str]:
    """Return an iterator over all sitemap urls contained in the given
    robots.txt file
    """
    for line in robots_text.splitlines():
        if line.lstrip().lower().startswith("sitemap:"):
            url = line.split(":", 1)[1].strip()
            yield urljoin(base_url or "", url)
