"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """A computation produced an unusable result (NaN, divergence, rank loss)."""


class UnsupportedModelError(ValueError):
    """The operation needs a different bath model than the one given."""


class DegenerateModelError(NumericalError):
    """Rates leave the steady state undefined (zero denominators, no kernel)."""


class IntegrationError(NumericalError):
    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step
