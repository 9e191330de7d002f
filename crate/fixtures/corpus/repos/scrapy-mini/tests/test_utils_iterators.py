from unittest import TestCase

from scrapy.utils.iterators import xmliter


class XmliterTestCase(TestCase):
    def test_xmliter(self):
        body = """<?xml version="1.0" encoding="UTF-8"?>
            <products>
              <product id="001"><type>Type 1</type><name>Name 1</name></product>
              <product id="002"><type>Type 2</type><name>Name 2</name></product>
            </products>"""
        nodes = list(xmliter(body, "product"))
        self.assertEqual(len(nodes), 2)

    def test_xmliter_unusual_node(self):
        body = b"<root><matchme...></matchme...><matchmenot></matchmenot></root>"
        nodes = list(xmliter(body, "matchme..."))
        self.assertEqual(nodes, ["<matchme...></matchme...>"])
