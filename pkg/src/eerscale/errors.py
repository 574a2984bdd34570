class DataError(ValueError):
    """Input data or parameters violate a documented invariant.

    The CLI maps this to exit status 2.
    """
