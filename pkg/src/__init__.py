"""Ring-LWE proof-of-quantumness protocol: scheme, verifier, provers and experiments."""
