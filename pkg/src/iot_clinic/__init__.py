"""IoT Clinic: a self-hostable IoT security diagnosis service.

Scan a target address for consumer-IoT risks, correlate honeypot/darknet
sightings to flag malware infection, deliver plain-language remediation
advice, and track whether re-diagnoses confirm the fix.
"""

__version__ = "0.1.0"

from .risks import RiskKind  # noqa: F401
