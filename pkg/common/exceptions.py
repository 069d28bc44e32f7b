# -*- coding: utf-8 -*-
"""Exception hierarchy shared by every UDON package."""


class UdonError(Exception):
    """Base class of all errors raised by the trainer."""


class ContractError(UdonError):
    """A documented precondition was violated by the caller."""


class DimensionError(ContractError):
    def __init__(self, message, *shapes):
        self.shapes = shapes
        if shapes:
            message = "{} (shapes: {})".format(message, ", ".join(str(tuple(s)) for s in shapes))
        super(DimensionError, self).__init__(message)


class FormatError(ContractError):
    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = "{} at byte offset {}".format(message, offset)
        super(FormatError, self).__init__(message)


class GenerationError(ContractError):
    def __init__(self, message, domain_id=None, class_id=None):
        self.domain_id = domain_id
        self.class_id = class_id
        if domain_id is not None:
            message = "{} (domain={}, class={})".format(message, domain_id, class_id)
        super(GenerationError, self).__init__(message)


class DivergenceError(UdonError):
    """A loss term became NaN or infinite during training."""

    def __init__(self, step, domain=None, terms=None):
        self.step = step
        self.domain = domain
        self.terms = dict(terms or {})
        super(DivergenceError, self).__init__(
            "training diverged at step {} (domain={}, terms={})".format(step, domain, self.terms))

    def to_dict(self):
        return {
            "status": "diverged",
            "step": self.step,
            "domain": self.domain,
            "terms": {k: repr(v) for k, v in self.terms.items()},
        }
