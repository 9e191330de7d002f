"""
Scrapy - a web crawling and web scraping framework (miniature fixture)
"""

__version__ = "2.11.0"
