class Spider:
    name = None

    def __init__(self, name=None, **kwargs):
        if name is not None:
            self.name = name
        self.__dict__.update(kwargs)

    def parse(self, response, **kwargs):
        raise NotImplementedError(f"{self.__class__.__name__}.parse callback is not defined")
