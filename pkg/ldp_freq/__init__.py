"""
@title: ldp-freq
@description: Frequency estimation under local differential privacy with projective geometry
"""

from .errors import LdpError, ParameterError
from .mechanisms.baselines import RrOracle, SsOracle
from .mechanisms.hpg import HpgOracle
from .mechanisms.pg import PgOracle
from .mechanisms.pirappor import PiRapporOracle
from .mechanisms.pubcoin import HpgPubOracle, PgPubOracle

__version__ = "0.1.0"
