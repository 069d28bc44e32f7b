# -*- coding: utf-8 -*-
"""Synthetic multi-domain data with conflicting cues and long-tail classes.

Feature layout: ``[shared | cue | domain 0 | ... | domain N-1 | padding]``.
Class centres live in the shared block and the domain's own block; the cue
block carries class centres only for ``cue_discriminative`` domains and pure
noise for ``cue_noise`` domains.
"""

from concurrent.futures import ThreadPoolExecutor
import logging
import numpy as np

from common.exceptions import ContractError, GenerationError
from common.utils import keyvalue
from .dataset import SPLITS, STAGES, Dataset, DomainSpec, split_tag

logger = logging.getLogger(__name__)

DEFAULT_SPLIT_FRACTIONS = (0.70, 0.05, 0.10, 0.05, 0.10)
DEFAULT_SHARED_DIMS = 8
DEFAULT_CUE_DIMS = 8


def zipf_class_sizes(num_classes, exponent, base):
    """size_k = max(1, round(base * k^-exponent)) for ranks k = 1..num_classes."""
    if num_classes < 1 or base < 1:
        raise ContractError("num_classes and base must be >= 1")
    ranks = np.arange(1, num_classes + 1, dtype=np.float64)
    sizes = np.maximum(1, np.round(base * ranks ** (-float(exponent))))
    return [int(s) for s in sizes]


def split_counts(n, fractions):
    """Largest-remainder allocation of ``n`` examples over the five splits."""
    raw = [n * f for f in fractions]
    counts = [int(np.floor(r)) for r in raw]
    left = n - sum(counts)
    # ties resolved by split order
    order = sorted(range(len(raw)), key=lambda s: (-(raw[s] - counts[s]), s))
    for s in order[:left]:
        counts[s] += 1
    return counts


def repair_split_counts(counts, fractions, domain_id, class_id):
    """Make sure every stage with a query example also has an index example."""
    counts = list(counts)
    train = split_tag('train')
    for stage in STAGES:
        q, ix = split_tag(stage + '_query'), split_tag(stage + '_index')
        if counts[q] == 0 or counts[ix] > 0:
            continue
        if fractions[ix] <= 0:
            raise GenerationError("split fractions put a {} query in a class that cannot have an {} index "
                                  "example".format(stage, stage), domain_id, class_id)
        if counts[train] >= 2:
            counts[train] -= 1
        else:
            counts[q] -= 1
        counts[ix] += 1
    return counts


def _validate_fractions(fractions):
    if len(fractions) != len(SPLITS):
        raise ContractError("expected {} split fractions, got {}".format(len(SPLITS), len(fractions)))
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ContractError("split fractions must be >= 0 and sum to 1: {}".format(list(fractions)))


def _generate_domain(spec, layout, feature_dim, fractions, seed):
    shared, cue, block = layout
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), spec.domain_id]))
    sizes = zipf_class_sizes(spec.num_classes, spec.class_size_exponent, spec.samples_per_class_base)
    cue_lo, cue_hi = shared, shared + cue
    dom_lo = shared + cue + spec.domain_id * block
    dom_hi = dom_lo + block

    class_ids, tags, feats = [], [], []
    for class_id, size in enumerate(sizes):
        centre = np.zeros(feature_dim)
        centre[:shared] = rng.standard_normal(shared)
        centre[dom_lo:dom_hi] = rng.standard_normal(block)
        if spec.cue_mode == 'cue_discriminative':
            centre[cue_lo:cue_hi] = spec.cue_scale * rng.standard_normal(cue)
        x = centre + spec.noise_sigma * rng.standard_normal((size, feature_dim))
        if spec.cue_mode == 'cue_noise':
            x[:, cue_lo:cue_hi] = spec.cue_scale * rng.standard_normal((size, cue))

        counts = repair_split_counts(split_counts(size, fractions), fractions, spec.domain_id, class_id)
        order = rng.permutation(size)
        per_example = np.repeat(np.arange(len(SPLITS), dtype=np.uint8), counts)
        assigned = np.empty(size, dtype=np.uint8)
        assigned[order] = per_example

        class_ids.append(np.full(size, class_id, dtype=np.uint32))
        tags.append(assigned)
        feats.append(x.astype(np.float32))
    return np.concatenate(class_ids), np.concatenate(tags), np.concatenate(feats)


def generate_multidomain(specs, feature_dim, split_fractions=DEFAULT_SPLIT_FRACTIONS, seed=0,
                         shared_dims=DEFAULT_SHARED_DIMS, cue_dims=DEFAULT_CUE_DIMS, workers=1):
    """Pure function of its arguments; ``workers`` only changes wall time."""
    specs = list(specs)
    if not specs:
        raise ContractError("at least one domain spec is required")
    for i, spec in enumerate(specs):
        if spec.domain_id != i:
            raise ContractError("domain specs must be numbered 0..N-1 in order")
    fractions = [float(f) for f in split_fractions]
    _validate_fractions(fractions)
    if feature_dim < 2 * (shared_dims + cue_dims):
        raise ContractError("feature_dim {} < 2 * (shared_dims + cue_dims) = {}".format(
            feature_dim, 2 * (shared_dims + cue_dims)))
    block = (feature_dim - shared_dims - cue_dims) // len(specs)
    if block < 1:
        raise ContractError("feature_dim {} leaves no per-domain block for {} domains".format(feature_dim, len(specs)))
    layout = (shared_dims, cue_dims, block)

    def _one(spec):
        return _generate_domain(spec, layout, feature_dim, fractions, seed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_one, specs))
    else:
        parts = [_one(spec) for spec in specs]

    domain_ids = np.concatenate([np.full(len(p[0]), s.domain_id, dtype=np.uint16) for s, p in zip(specs, parts)])
    metadata = generator_metadata(specs, feature_dim, fractions, seed, shared_dims, cue_dims)
    dataset = Dataset(
        feature_dim=feature_dim,
        classes_per_domain=[s.num_classes for s in specs],
        domain_ids=domain_ids,
        class_ids=np.concatenate([p[0] for p in parts]),
        split_tags=np.concatenate([p[1] for p in parts]),
        features=np.concatenate([p[2] for p in parts]),
        metadata=metadata,
    )
    logger.info("generated dataset: %s", dataset.summary())
    return dataset


def generator_metadata(specs, feature_dim, fractions, seed, shared_dims, cue_dims):
    meta = {
        'generator': 'synthetic_multidomain',
        'data_seed': str(seed),
        'feature_dim': str(feature_dim),
        'domains': str(len(specs)),
        'split_fractions': keyvalue.format_list([float(f) for f in fractions]),
        'shared_dims': str(shared_dims),
        'cue_dims': str(cue_dims),
    }
    for spec in specs:
        for key, value in spec.to_dict().items():
            if key != 'domain_id':
                meta['domain.{}.{}'.format(spec.domain_id, key)] = str(value)
    return meta


def specs_from_config(values):
    """DomainSpecs from flat ``domain.<i>.<field>`` keys."""
    try:
        n = int(values['domains'])
    except KeyError:
        raise ContractError("generator config needs a 'domains' key")
    specs = []
    for i in range(n):
        prefix = 'domain.{}.'.format(i)
        if prefix + 'num_classes' not in values:
            raise ContractError("generator config misses '{}num_classes'".format(prefix))
        specs.append(DomainSpec(
            domain_id=i,
            num_classes=int(values[prefix + 'num_classes']),
            class_size_exponent=float(values.get(prefix + 'class_size_exponent', 0.0)),
            samples_per_class_base=int(values.get(prefix + 'samples_per_class_base', 30)),
            cue_mode=values.get(prefix + 'cue_mode', 'cue_discriminative'),
            noise_sigma=float(values.get(prefix + 'noise_sigma', 0.5)),
            cue_scale=float(values.get(prefix + 'cue_scale', 1.5)),
        ))
    return specs


def generate_from_config(values, workers=1):
    """Build a dataset from parsed generator config values (e.g. ``var/config/default.conf``)."""
    specs = specs_from_config(values)
    fractions = keyvalue.to_float_list(values.get('split_fractions', keyvalue.format_list(DEFAULT_SPLIT_FRACTIONS)))
    return generate_multidomain(
        specs,
        feature_dim=int(values.get('feature_dim', 64)),
        split_fractions=fractions,
        seed=int(values.get('data_seed', 0)),
        shared_dims=int(values.get('shared_dims', DEFAULT_SHARED_DIMS)),
        cue_dims=int(values.get('cue_dims', DEFAULT_CUE_DIMS)),
        workers=workers,
    )
