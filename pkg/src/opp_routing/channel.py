"""Path loss, block fading and SINR in the power domain.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
import logging

import numpy as np

from .errors import ConfigError, GeometryError

logger = logging.getLogger(__name__)


class Fading(Enum):
    RAYLEIGH = "rayleigh"
    NONE = "none"


@dataclass(frozen=True)
class ChannelParams:
    """Propagation and decoding constants.

    Args:
        alpha (float): path-loss exponent, > 2
        noise_power (float): N0, >= 0
        fading (Fading): squared fading law
        eta (float): SINR decoding threshold, > 0
    """
    alpha: float = 4.0
    noise_power: float = 1.0
    fading: Fading = Fading.RAYLEIGH
    eta: float = 1.0

    def __post_init__(self):
        if not self.alpha > 2:
            raise ConfigError("alpha must be > 2, got %s" % self.alpha)
        if self.noise_power < 0:
            raise ConfigError("noise power must be >= 0")
        if not self.eta > 0:
            raise ConfigError("eta must be > 0")
        object.__setattr__(self, 'fading', Fading(self.fading))


def path_gain(r, alpha):
    """Power attenuation r^-alpha.

    Args:
        r (float|np.ndarray): distance(s)
        alpha (float): path-loss exponent

    Returns:
        (float|np.ndarray)
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise GeometryError("zero distance between transmitter and receiver")

    gain = r ** -alpha
    if gain.ndim == 0:
        return float(gain)

    return gain


class ChannelSample(object):
    """Squared fading magnitudes of one block.

    Gains are drawn lazily the first time a (tx, rx) link is requested and
    never change afterwards, so every reader of the block sees the same
    channel whatever the order of its requests.
    """

    def __init__(self, block_id, fading, rng):
        self.block_id = block_id
        self.fading = Fading(fading)
        self._rng = rng
        self._gains = {}

    @property
    def gains(self):
        """Links drawn so far, (tx, rx) -> |g|^2.
        """
        return dict(self._gains)

    def _draw(self, count):
        if self.fading is Fading.NONE:
            return np.ones(count)

        return self._rng.exponential(1., size=count)

    def gain(self, tx, rx):
        return self.matrix([rx], [tx])[0, 0]

    def matrix(self, receivers, transmitters):
        """Squared gains, one row per receiver, one column per transmitter.

        Args:
            receivers (list of int): receiving node ids
            transmitters (list of int): transmitting node ids

        Returns:
            (np.ndarray)
        """
        links = [(int(tx), int(rx)) for rx in receivers for tx in transmitters]
        missing = [link for link in dict.fromkeys(links)
                   if link not in self._gains]
        if len(missing) > 0:
            self._gains.update(zip(missing, self._draw(len(missing))))

        vals = np.array([self._gains[link] for link in links], dtype=float)
        return vals.reshape(len(receivers), len(transmitters))


def draw_block_fading(links, fading, rng, block_id=0):
    """Open a new fading block.

    Args:
        links (iterable of (int, int)): (tx, rx) links drawn eagerly,
                                        others are drawn on demand
        fading (Fading|str): fading law
        rng (np.random.Generator): substream of this block
        block_id (int): identifier of the block

    Returns:
        (ChannelSample)
    """
    sample = ChannelSample(block_id, fading, rng)
    links = list(links or ())
    if len(links) > 0:
        if len(set(links)) != len(links):
            raise ValueError("links must be distinct")
        for tx, rx in links:
            sample.gain(tx, rx)

    return sample


def distances(positions, receivers, transmitters):
    """Euclidean distance matrix, receivers x transmitters.
    """
    rx_pos = positions[np.asarray(receivers, dtype=int)]
    tx_pos = positions[np.asarray(transmitters, dtype=int)]
    diff = rx_pos[:, None, :] - tx_pos[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=2))


def received_powers(positions, receivers, transmitters, per_hop_power,
                    sample, params):
    """Power seen by every receiver from every transmitter.

    Args:
        positions (np.ndarray): node coordinates
        receivers (list of int): receiving nodes
        transmitters (list of int): simultaneously transmitting nodes
        per_hop_power (float): transmit power of every node
        sample (ChannelSample): fading block
        params (ChannelParams): channel constants

    Returns:
        (np.ndarray): |g|^2 r^-alpha p, receivers x transmitters
    """
    if len(receivers) == 0 or len(transmitters) == 0:
        return np.zeros((len(receivers), len(transmitters)))

    dist = distances(positions, receivers, transmitters)
    return (sample.matrix(receivers, transmitters)
            * path_gain(dist, params.alpha) * per_hop_power)


def sinr_matrix(powers, noise_power):
    """SINR of every (receiver, transmitter) link given all received powers.

    Every transmitter other than the desired one interferes.

    Args:
        powers (np.ndarray): output of received_powers
        noise_power (float): N0

    Returns:
        (np.ndarray, np.ndarray): SINR matrix and interference matrix
    """
    total = powers.sum(axis=1, keepdims=True)
    interference = total - powers
    denom = noise_power + interference
    silent = np.where(powers > 0, np.inf, 0.)
    sinr = np.where(denom > 0, powers / np.where(denom > 0, denom, 1.), silent)

    return sinr, interference


def sinr_at(rx, tx, interferers, per_hop_power, sample, params, positions):
    """SINR seen by rx when tx transmits among interferers.

    Args:
        rx (int): receiving node
        tx (int): desired transmitter
        interferers (iterable of int): other simultaneous transmitters
        per_hop_power (float): transmit power of every node
        sample (ChannelSample): fading block
        params (ChannelParams): channel constants
        positions (np.ndarray): node coordinates

    Returns:
        (float)
    """
    interferers = [int(nid) for nid in interferers]
    if tx in interferers:
        raise ValueError("desired transmitter listed as interferer")

    powers = received_powers(positions, [rx], [tx] + interferers,
                             per_hop_power, sample, params)[0]
    denom = params.noise_power + powers[1:].sum()
    if denom == 0:
        return float("inf") if powers[0] > 0 else 0.

    return float(powers[0] / denom)


def analytic_outage_cdf(per_pair_power, delay, alpha, c4):
    """Outage probability of one hop, 1 - exp(-c4 / (P D^(alpha - 1))).

    Args:
        per_pair_power (float|np.ndarray): P, total power of an S-D pair
        delay (float): D, number of hops
        alpha (float): path-loss exponent
        c4 (float): geometry constant

    Returns:
        (float|np.ndarray)
    """
    power = np.asarray(per_pair_power, dtype=float)
    with np.errstate(divide='ignore'):
        expo = c4 / (power * delay ** (alpha - 1))
    res = -np.expm1(-expo)
    if res.ndim == 0:
        return float(res)

    return res
