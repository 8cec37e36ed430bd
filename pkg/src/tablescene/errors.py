"""Errors shared by the provider bindings."""


class ProviderUnavailable(RuntimeError):
    """An external service (LLM or text-similarity) could not answer."""
