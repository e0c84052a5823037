class CovarianceError(ArithmeticError):
    """The filter covariance stopped being symmetric positive semi-definite."""
