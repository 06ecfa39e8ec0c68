"""Physical constants and geometry of the plate/membrane transmission problem."""

from dataclasses import asdict, dataclass, fields, replace

from .errors import ParameterError

_POSITIVE = ("alpha", "beta", "beta1", "beta2", "rho0", "rho1", "rho2", "kappa")
_NONNEGATIVE = ("sigma", "m")


@dataclass(frozen=True)
class PhysicalParams:
    """Model constants.

    ``alpha`` couples plate and temperature, ``beta`` is the heat conductivity,
    ``beta1``/``beta2`` are plate and membrane stiffnesses, ``rho0..rho2`` the
    heat capacity and the two mass densities, ``sigma`` the heat loss, ``m`` the
    Kelvin-Voigt damping of the membrane, ``kappa`` the Robin cooling
    coefficient and ``mu`` the Poisson ratio of the plate.
    """

    alpha: float = 1.0
    beta: float = 1.0
    beta1: float = 1.0
    beta2: float = 1.0
    rho0: float = 1.0
    rho1: float = 1.0
    rho2: float = 1.0
    sigma: float = 0.0
    m: float = 0.0
    kappa: float = 1.0
    mu: float = 0.3

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or v != v or v in (float("inf"), float("-inf")):
                raise ParameterError(f"{f.name} must be a finite real number, got {v!r}", f.name)
        for name in _POSITIVE:
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be > 0, got {getattr(self, name)}", name)
        for name in _NONNEGATIVE:
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0, got {getattr(self, name)}", name)
        if not 0.0 < self.mu < 0.5:
            raise ParameterError(f"mu (Poisson ratio) must lie in (0, 1/2), got {self.mu}", "mu")

    def with_(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Geometry:
    """Concentric disk-in-disk: plate on r_in < r < r_out, membrane on r < r_in."""

    r_in: float = 1.0
    r_out: float = 2.0

    def __post_init__(self):
        if not (self.r_in > 0 and self.r_out > 0):
            raise ParameterError("radii must be positive", "r_in" if self.r_in <= 0 else "r_out")
        if not self.r_in < self.r_out:
            raise ParameterError(f"need r_in < r_out, got {self.r_in} >= {self.r_out}", "r_in")

    @property
    def interface_length(self):
        from math import pi

        return 2 * pi * self.r_in

    @property
    def boundary_length(self):
        from math import pi

        return 2 * pi * (self.r_in + self.r_out)
