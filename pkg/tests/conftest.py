import random
from dataclasses import dataclass

import numpy as np
import pytest

from mfake.mffe import SecretBinding
from mfake.pki import (
    RcState,
    RevocationList,
    SpCredential,
    UserDeviceRecord,
    rc_setup,
    register_sp,
    register_user,
)


@dataclass
class Deployment:
    """One registered user and provider under a fresh center."""

    rc: RcState
    device: UserDeviceRecord
    template: np.ndarray
    sp_gamma: int
    sp_cred: SpCredential
    revocations: RevocationList

    @property
    def params(self):
        return self.rc.params


def make_deployment(n=4, d=0.5, group_id="bls12-381", seed=1234) -> Deployment:
    rng = random.Random(seed)
    nrng = np.random.default_rng(seed)
    rc = rc_setup(n, d, group_id, rng)
    group = rc.params.group

    binding = SecretBinding.generate(group, rng)
    template = nrng.normal(scale=2.0, size=n)
    credential, sketch = register_user(rc, "test-user", binding.z, template, rng)
    device = UserDeviceRecord(
        alpha=binding.alpha, uid=credential.uid, sketch=sketch, credential=credential
    )

    gamma = group.sample_scalar(rng)
    sp_cred = register_sp(
        rc,
        "test-sp",
        group.power(group.generator(), gamma),
        group.power(rc.params.h, gamma),
    )
    return Deployment(
        rc=rc,
        device=device,
        template=template,
        sp_gamma=gamma,
        sp_cred=sp_cred,
        revocations=RevocationList(),
    )


@pytest.fixture(scope="session")
def deployment():
    return make_deployment()
