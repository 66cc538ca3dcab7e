"""Anonymous supply-chain traceability: sanitise EPCIS events, publish them
to a discovery service, verify custody chains and exchange data through a
dead drop."""

from .audit import AttackResult, dictionary_attack
from .chain import ChainVerdict, CustodyLink, fetch_history, match_pairs, verify_chain
from .deaddrop import AccessRequest, AuthPolicy, DeadDrop, Recipient, evaluate_auth, respond
from .events import Event, parse_event_json, parse_event_xml, serialize_json, serialize_xml, validate
from .ni import NiUri, ni_hash, salted_hash
from .sanitiser import (
    Classification,
    SanitisedEvent,
    SanitiserConfig,
    SaltSource,
    classify,
    compute_event_id,
    derive_salt,
    sanitise,
)
from .simulator import NetworkSpec, default_spec, generate, inject_fault
from .store import DiscoveryStore

__version__ = "0.1.0"
