"""Utilities for hashing, seeding and serializing artifacts."""
import json
import os
from hashlib import sha256

import numpy as np

SEED_MASK = (1 << 63) - 1


def derive_seed(master, run=0, episode=0):
    """Derive the seed of one episode of one run from the master seed.

    The three integers are hashed together so that streams of different
    runs and episodes are independent and can be created in any order, e.g.
    by parallel workers::

        sha256(b"{master}:{run}:{episode}")[:8], big-endian, 63 bits

    Args:
        master (int): The master seed of the experiment.
        run (int): The index of the run (seed slot) within the experiment.
        episode (int): The index of the episode within the run.

    Returns:
        (int): A non-negative 63 bit seed.
    """
    digest = sha256(f"{int(master)}:{int(run)}:{int(episode)}".encode("ascii"))
    return int.from_bytes(digest.digest()[:8], "big") & SEED_MASK


def make_rng(master, run=0, episode=0):
    """A numpy random stream seeded through derive_seed."""
    seed = derive_seed(master, run, episode)
    return np.random.Generator(np.random.PCG64(seed))


class ArtifactEncoder(json.JSONEncoder):
    """JSONEncoder for artifacts holding numpy values and dataclasses.

    Numpy scalars and arrays are converted to python numbers and lists;
    objects offering ``to_dict`` are encoded through it. Anything else that
    is not json serializable is encoded by the sha256 hash of its bytes or,
    failing that, by its string representation.
    """

    def default(self, o):
        """Encode the object, handling type errors by hashing."""
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (set, frozenset)):
            return sorted(o)
        if hasattr(o, "to_dict"):
            return o.to_dict()
        try:
            return super().default(o)
        except TypeError:
            try:
                return sha256(o).hexdigest()
            except TypeError:
                return str(o)


def get_hash(obj, hash_func=lambda x: sha256(x).hexdigest()):
    """Safely get the hash of an object.

    Bytes are hashed directly, numpy arrays through their raw buffer and
    everything else through its canonical (sorted keys) json encoding.

    Args:
        obj: The object to hash
        hash_func (func(bytes) -> str): The hashing function to use

    Returns:
        (str): A hash of the obj, None if it can not be encoded.
    """
    if isinstance(obj, np.ndarray):
        return hash_func(np.ascontiguousarray(obj).tobytes())
    try:
        return hash_func(obj)
    except (TypeError, ValueError):
        pass
    try:
        text = json.dumps(obj, sort_keys=True, cls=ArtifactEncoder)
    except (TypeError, ValueError):
        return None
    return hash_func(text.encode("utf-8"))


def source_fingerprint(package_dir=None):
    """Hash the python sources of the package as its code version.

    Args:
        package_dir (str): Defaults to the directory of this package.

    Returns:
        (str): The sha256 over all ``*.py`` files, in sorted path order.
    """
    package_dir = package_dir or os.path.dirname(os.path.abspath(__file__))
    digest = sha256()
    for root, dirs, files in os.walk(package_dir):
        dirs.sort()
        for name in sorted(files):
            if not name.endswith(".py"):
                continue
            path = os.path.join(root, name)
            digest.update(os.path.relpath(path, package_dir).encode("utf-8"))
            with open(path, "rb") as stream:
                digest.update(stream.read())
    return digest.hexdigest()
