"""Test problems: Dahlquist and the 2-D periodic Allen-Cahn equation.

The Allen-Cahn right-hand side is split for IMEX sweeping: the linear
diffusion is applied and inverted diagonally in Fourier space, the
cubic reaction is evaluated pointwise.  Initial conditions are sums of
tanh-profile circles with radii drawn from a small, fully documented
shift-register generator so any implementation can reproduce the exact
same fields.
"""

import logging
import struct
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Field2D",
    "DahlquistProblem",
    "AllenCahnProblem",
    "Xorshift64Star",
    "spectral_transform",
    "ac_initial_condition",
    "measure_radius",
    "write_field",
    "read_field",
]

log = logging.getLogger(__name__)


def _require_pow2(n):
    if n < 2 or n & (n - 1):
        raise ValueError(f"grid size must be a power of two, got {n}")


@dataclass
class Field2D:
    """Real N x N grid over the periodic square [-L/2, L/2]^2.

    L equals the number of unit patches, so the spacing is L/N.
    """

    values: np.ndarray
    lpatches: int = 1

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def spacing(self):
        return self.lpatches / self.n


def _forward(values):
    # normalized so a constant field has that constant in the zero mode
    n = values.shape[0]
    return np.fft.fft2(values) / (n * n)


def _inverse(coeffs):
    n = coeffs.shape[0]
    return np.real(np.fft.ifft2(coeffs * (n * n)))


def spectral_transform(field, direction):
    """Forward/inverse Fourier transform of a Field2D.

    Forward returns the complex coefficient grid with wavenumbers
    2*pi*m/L, m in {-N/2, ..., N/2-1} in standard FFT layout and unit
    amplitude normalization (a constant c maps to zero-mode c).
    """
    if direction == "forward":
        _require_pow2(field.n)
        return _forward(field.values)
    if direction == "inverse":
        n = field.values.shape[0] if isinstance(field, Field2D) else field.shape[0]
        coeffs = field.values if isinstance(field, Field2D) else field
        _require_pow2(n)
        return Field2D(_inverse(coeffs))
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


class DahlquistProblem:
    """Scalar test equation u' = lambda_I u + lambda_E u, split IMEX."""

    kind = "dahlquist"

    def __init__(self, lambda_implicit=-1.0, lambda_explicit=0.0):
        self.lambda_implicit = lambda_implicit
        self.lambda_explicit = lambda_explicit
        self.n_dof = 1

    def eval_implicit(self, u):
        return self.lambda_implicit * u

    def eval_explicit(self, u):
        return self.lambda_explicit * u

    def implicit_solve(self, rhs, factor):
        # (1 - factor*lambda_I) u = rhs
        return rhs / (1.0 - factor * self.lambda_implicit)

    def dense_operator(self):
        return np.array([[self.lambda_implicit + self.lambda_explicit]])


class AllenCahnProblem:
    """2-D Allen-Cahn u_t = Lap(u) - 2/eps^2 u(1-u)(1-2u), periodic.

    Spectral discretization on an N x N grid over [-L/2, L/2]^2 with
    N a power of two; diffusion is the implicit part, the reaction the
    explicit one.  State vectors are (N, N) arrays.
    """

    kind = "allen_cahn"

    def __init__(self, n, lpatches=1, eps=0.04):
        _require_pow2(n)
        if eps <= 0:
            raise ValueError(f"interface parameter must be positive, got {eps}")
        self.n = n
        self.lpatches = int(lpatches)
        self.eps = float(eps)
        h = self.lpatches / n
        k = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
        kx, ky = np.meshgrid(k, k, indexing="ij")
        self._minus_ksq = -(kx**2 + ky**2)
        cells = 7.0 * self.eps / h
        log.info(
            "allen-cahn grid n=%d L=%d eps=%g: interface width 7*eps spans %.2f cells",
            n, self.lpatches, self.eps, cells,
        )

    def interface_cells(self):
        """Grid cells across one interface width of 7*eps."""
        return 7.0 * self.eps * self.n / self.lpatches

    def eval_implicit(self, u):
        return _inverse(self._minus_ksq * _forward(u))

    def eval_explicit(self, u):
        return -(2.0 / self.eps**2) * u * (1.0 - u) * (1.0 - 2.0 * u)

    def implicit_solve(self, rhs, factor):
        """Solve (I - factor*Lap) u = rhs diagonally in Fourier space."""
        if factor < 0:
            raise ValueError(f"implicit solve needs a nonnegative factor, got {factor}")
        return _inverse(_forward(rhs) / (1.0 - factor * self._minus_ksq))


class Xorshift64Star:
    """Minimal shift-register generator, reproducible across languages.

    State is one 64-bit word.  A zero seed is replaced by the constant
    0x9E3779B97F4A7C15.  One step computes

        x ^= x >> 12;  x ^= (x << 25) & 2^64-1;  x ^= x >> 27;
        output = (x * 0x2545F4914F6CDD1D) mod 2^64

    and uniform doubles take the top 53 bits of the output divided by
    2^53.
    """

    _MASK = (1 << 64) - 1
    _MULT = 0x2545F4914F6CDD1D

    def __init__(self, seed):
        self.state = int(seed) & self._MASK or 0x9E3779B97F4A7C15

    def next_u64(self):
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & self._MASK
        x ^= x >> 27
        self.state = x
        return (x * self._MULT) & self._MASK

    def uniform(self, lo=0.0, hi=1.0):
        return lo + (hi - lo) * ((self.next_u64() >> 11) / float(1 << 53))


def ac_initial_condition(lpatches, eps, n, seed, radius=None):
    """Sum of tanh circles, one per unit patch, on [-L/2, L/2]^2.

    Each patch holds a circle u = (1 + tanh((R - |x - c|)/(sqrt(2) eps)))/2
    centered in the patch.  Radii are drawn uniformly from
    [0.5*eps, 3*eps] with Xorshift64Star(seed), row-major over patches,
    so equal seeds give bit-identical fields.  A fixed radius for every
    patch can be forced with the radius argument (test override).
    """
    if n % lpatches:
        raise ValueError(f"grid size {n} not divisible by patch count {lpatches}")
    rng = Xorshift64Star(seed)
    half = lpatches / 2.0
    h = lpatches / n
    coords = -half + h * (np.arange(n) + 0.5)
    x, y = np.meshgrid(coords, coords, indexing="ij")
    values = np.zeros((n, n))
    for i in range(lpatches):
        for j in range(lpatches):
            r = rng.uniform(0.5 * eps, 3.0 * eps) if radius is None else radius
            cx = -half + i + 0.5
            cy = -half + j + 0.5
            dist = np.sqrt((x - cx) ** 2 + (y - cy) ** 2)
            values += 0.5 * (1.0 + np.tanh((r - dist) / (np.sqrt(2.0) * eps)))
    return Field2D(values, lpatches)


def measure_radius(field):
    """Radius of a single phase-field circle from its area, sqrt(A/pi)."""
    area = field.spacing**2 * float(np.sum(field.values))
    if area <= 0.0:
        warnings.warn("nonpositive phase-field area; returning radius 0", stacklevel=2)
        return 0.0
    return float(np.sqrt(area / np.pi))


_HEADER = struct.Struct("<II")


def write_field(field, path):
    """Snapshot as flat binary: u32 N, u32 patches, then N*N f64 row-major (LE)."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(field.n, field.lpatches))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_field(path):
    with open(path, "rb") as fh:
        n, lpatches = _HEADER.unpack(fh.read(_HEADER.size))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n * n:
        raise ValueError(f"snapshot holds {data.size} values, expected {n * n}")
    return Field2D(data.reshape(n, n).copy(), lpatches)
