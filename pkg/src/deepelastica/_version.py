__version__ = "0.1.dev1"    # pragma no cover
