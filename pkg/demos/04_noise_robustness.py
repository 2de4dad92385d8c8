"""
Accuracy under input noise
==========================

Trains LIF and RPLIF classifiers on an MNIST subset and evaluates them on
Gaussian, salt-and-pepper and uniform corruptions of the test images.
Set RPLIF_MNIST_DIR to the folder that holds the four IDX files.
"""
import os

from rplif.data import NOISE_LEVELS, NoiseSpec, apply_noise, Dataset, load_mnist
from rplif.model import Model, ModelSpec
from rplif.neuron import NeuronConfig
from rplif.train import TrainConfig, evaluate, train

data_dir = os.environ.get("RPLIF_MNIST_DIR", "data/mnist")
train_set = load_mnist(data_dir, "train", limit=2000)
test_set = load_mnist(data_dir, "test", limit=1000)

models = {}
for name, cfg in (("LIF", NeuronConfig(mode="baseline")), ("RPLIF", NeuronConfig(alpha=1.5))):
    model = Model.create(ModelSpec((784, 128, 10), cfg, timesteps=4, seed=0))
    train(model, train_set, TrainConfig(epochs=2))
    models[name] = model
    print(f"{name}: clean accuracy {evaluate(model, test_set)[1]:.3f}")

for kind, levels in NOISE_LEVELS.items():
    for level in levels:
        noisy = Dataset(apply_noise(test_set.images, NoiseSpec(kind, level, seed=1)), test_set.labels)
        accs = {name: evaluate(m, noisy)[1] for name, m in models.items()}
        print(f"{kind:12s} {level:.2f}  LIF {accs['LIF']:.3f}  RPLIF {accs['RPLIF']:.3f}")
