"""Link functions for the three submodels."""

from __future__ import annotations

import numpy as np
from scipy.special import expit, logit

from .errors import ConfigurationError


class Link:
    name = "base"

    def link(self, mu):
        raise NotImplementedError

    def inverse(self, eta):
        raise NotImplementedError

    def inverse_deriv(self, eta):
        """Derivative of the inverse link with respect to the linear predictor."""
        raise NotImplementedError

    @property
    def exponentiate(self) -> bool:
        """Whether coefficients read naturally on the exp scale (odds/rate ratios)."""
        return False

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return isinstance(other, Link) and other.name == self.name

    def __hash__(self):
        return hash(self.name)


class Logit(Link):
    name = "logit"

    def link(self, mu):
        return logit(mu)

    def inverse(self, eta):
        return expit(eta)

    def inverse_deriv(self, eta):
        p = expit(eta)
        return p * (1.0 - p)

    @property
    def exponentiate(self):
        return True


# exp() of anything larger overflows double precision.
LOG_CAP = 700.0


class Log(Link):
    name = "log"

    def link(self, mu):
        return np.log(mu)

    def inverse(self, eta):
        return np.exp(np.minimum(eta, LOG_CAP))

    def inverse_deriv(self, eta):
        return np.exp(np.minimum(eta, LOG_CAP))

    @property
    def exponentiate(self):
        return True


class Identity(Link):
    name = "identity"

    def link(self, mu):
        return np.asarray(mu, dtype=float) if np.ndim(mu) else float(mu)

    def inverse(self, eta):
        return np.asarray(eta, dtype=float) if np.ndim(eta) else float(eta)

    def inverse_deriv(self, eta):
        return np.ones_like(np.asarray(eta, dtype=float))


_LINKS = {cls.name: cls for cls in (Logit, Log, Identity)}


def get_link(name) -> Link:
    if isinstance(name, Link):
        return name
    try:
        return _LINKS[str(name).lower()]()
    except KeyError:
        raise ConfigurationError(
            f"unknown link {name!r}; choose from {sorted(_LINKS)}"
        ) from None
