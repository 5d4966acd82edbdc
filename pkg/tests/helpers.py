import numpy as np

from voidsurrogate import pca
from voidsurrogate.gp import GpConfig, gp_fit
from voidsurrogate.nn import NnArch, TrainConfig, nn_init, nn_train
from voidsurrogate.pipeline import SurrogatePipeline


def rows(ds, idx):
    return ds.masks(idx).reshape(len(idx), -1), ds.stresses(idx).reshape(len(idx), -1)


def quick_gp_pipeline(ds, idx, k_in=6, k_out=5, **gp_kw):
    Xm, Xs = rows(ds, idx)
    cin = pca.fit(Xm, pca.POLICY_NONE, pca.Components(k_in))
    cout = pca.fit(Xs, pca.POLICY_CENTER_SCALE, pca.Components(k_out))
    gp = gp_fit(cin.encode(Xm), cout.encode(Xs), GpConfig(restarts=1, **gp_kw))
    return SurrogatePipeline(cin, gp, cout, ds.grid)


def quick_nn_pipeline(ds, idx, k_in=6, k_out=5, seed=0, epochs=50):
    Xm, Xs = rows(ds, idx)
    cin = pca.fit(Xm, pca.POLICY_NONE, pca.Components(k_in))
    cout = pca.fit(Xs, pca.POLICY_CENTER_SCALE, pca.Components(k_out))
    model = nn_train(nn_init(NnArch(k_in, k_out, 2, 32, "tanh"), seed), (cin.encode(Xm), cout.encode(Xs)),
                     None, TrainConfig(max_epochs=epochs, seed=seed))
    return SurrogatePipeline(cin, model, cout, ds.grid)


def probe_masks(ds, n=10):
    return np.stack([s.mask for s in ds.samples[-n:]])
