from scrapy.spiders import Spider
from scrapy.utils.iterators import xmliter


class XMLFeedSpider(Spider):
    iterator = "iternodes"
    itertag = "item"
    namespaces = ()

    def process_results(self, response, results):
        return results

    def adapt_response(self, response):
        return response

    def parse_node(self, response, selector):
        if hasattr(self, "parse_item"):
            return self.parse_item(response, selector)
        raise NotImplementedError

    def parse_nodes(self, response, nodes):
        for selector in nodes:
            ret = iter(self.parse_node(response, selector))
            for result_item in self.process_results(response, ret):
                yield result_item

    def _parse(self, response, **kwargs):
        response = self.adapt_response(response)
        if self.iterator == "iternodes":
            nodes = self._iternodes(response)
        else:
            raise ValueError(f"Unsupported node iterator: {self.iterator!r}")
        return self.parse_nodes(response, nodes)

    def _iternodes(self, response):
        for node in xmliter(response, self.itertag):
            yield node
