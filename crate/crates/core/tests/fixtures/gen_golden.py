"""Regenerates golden.json. Independent of the Rust code: mpmath at 30 digits
for closed-form/quadrature values, numpy for the Monte Carlo value."""
import json
import mpmath as mp
import numpy as np

mp.mp.dps = 30
out = []


def add(name, value, source, se=None):
    rec = {"name": name, "value": float(value), "source": source}
    if se is not None:
        rec["se"] = float(se)
    out.append(rec)


# fBM covariance at H=0.75, s=0.5, t=1
H = mp.mpf("0.75")
s, t = mp.mpf("0.5"), mp.mpf(1)
add("covariance_h075_s05_t1", (t ** (2 * H) + s ** (2 * H) - abs(t - s) ** (2 * H)) / 2,
    "mpmath direct evaluation")

# iota for sigma(s)=s, t=1, H=0.75; split at the diagonal and integrate each triangle
CH = H * (2 * H - 1)
inner = lambda u: mp.quad(lambda v: v * (u - v) ** (2 * H - 2), [0, u])
iota_s = 2 * CH * mp.quad(lambda u: u * inner(u), [0, 1])
add("iota_sigma_linear_h075_t1", iota_s, "mpmath nested quadrature")

# iota derivative for sigma(s)=s at t=1
d = 2 * CH * 1 * mp.quad(lambda v: v * (1 - v) ** (2 * H - 2), [0, 1])
add("iota_derivative_sigma_linear_h075_t1", d, "mpmath quadrature")

# Nourdin-Viens density with g(u)=1+u^2, m=0, mu=1, x=1
I = mp.quad(lambda u: u / (1 + u ** 2), [0, 1])
add("nv_density_g_1pu2_x1", 1 / (2 * 2) * mp.e ** (-I), "mpmath quadrature")

# heat semigroup of exp at t=0.5, x=0.2
add("semigroup_exp_t05_x02",
    mp.quad(lambda y: mp.npdf(y, 0.2, mp.sqrt(0.5)) * mp.e ** y, [-mp.inf, mp.inf]),
    "mpmath quadrature")

# chi reference: integral of u(1+|u+m|^{2a}) from 0 to z-m for z=1.5, m=0.2, a=0.3
z, m, a = mp.mpf("1.5"), mp.mpf("0.2"), mp.mpf("0.3")
add("chi_z15_m02_a03", mp.quad(lambda u: u * (1 + abs(u + m) ** (2 * a)), [0, z - m]),
    "mpmath quadrature")


# smooth convex terminal map h(x) = 1.25 x + 2.25 * log cosh(x / 3)
def h_np(x):
    ax = np.abs(x / 3.0)
    return 1.25 * x + 2.25 * (ax + np.log1p(np.exp(-2 * ax)) - np.log(2.0))


# quasi-conditional expectation at t=T/2, w=0.3 with sigma=1, b=0, eta0=0, H=0.75, T=1
var = 1.0 - 0.5 ** 1.5
rng = np.random.default_rng(20240611)
samples = h_np(0.3 + np.sqrt(var) * rng.standard_normal(1_000_000))
add("qce_smooth_convex_t05_w03", samples.mean(), "numpy Monte Carlo, 1e6 samples",
    se=samples.std(ddof=1) / np.sqrt(samples.size))

# the same quantity by quadrature, for reference
hmp = lambda x: mp.mpf("1.25") * x + mp.mpf("2.25") * mp.log(mp.cosh(x / 3))
add("qce_smooth_convex_t05_w03_quad",
    mp.quad(lambda y: mp.npdf(y, 0.3, mp.sqrt(var)) * hmp(y), [-mp.inf, mp.inf]),
    "mpmath quadrature")

# transferred solve with f=0, V(t)=t^1.5, h(x)=x+0.1x^3: phi(V(0.5), 0.7) = P_{1-V(0.5)} h(0.7)
tau = 1 - mp.mpf("0.5") ** mp.mpf("1.5")
add("transfer_phi_cubic_h075_t05_x07",
    mp.quad(lambda y: mp.npdf(y, mp.mpf("0.7"), mp.sqrt(tau)) * (y + y ** 3 / 10), [-mp.inf, mp.inf]),
    "mpmath quadrature")

# representation quotient for f(y)=y, y=1, z=0, V(t)=t, eps=0.1: solves y' = -y backward
eps = mp.mpf("0.1")
add("representation_quotient_ylin_eps01", (mp.e ** eps - 1) / eps, "mpmath scalar ODE solution")

# inverse of V(t)=t^1.5 at s=0.25
add("clock_inverse_h075_s025", mp.mpf("0.25") ** (mp.mpf(2) / 3), "mpmath direct evaluation")

doc = {
    "schema_version": 1,
    "schema": "values: list of {name: string, value: f64, source: string, se?: f64}",
    "values": out,
}
with open(__file__.replace("gen_golden.py", "golden.json"), "w") as fh:
    json.dump(doc, fh, indent=2)
    fh.write("\n")
