"""Build the bundled digit images and MLP model.

MNIST is not available offline, so this uses scikit-learn's 8x8 digits,
upscaled to 28x28 with pixels stretched to 0..255.  A 784-128-10 sigmoid
MLP is trained on them, then its weights are scaled by F_w and rounded to
integers; the sigmoid is replaced by the integer line y = x + 900.

Run from the repository root:  python3 demos/make_digit_fixture.py
"""

import json
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits
from sklearn.neural_network import MLPClassifier

from cimhe.tasks import MlpModel, write_idx

OUT = Path(__file__).resolve().parents[1] / "src" / "cimhe" / "data" / "fixtures"
F_W, F_A = 100, 1800


def upscale(img8):
    big = np.kron(img8, np.ones((3, 3)))  # 24x24
    big = np.pad(big, 2)
    return np.clip(np.rint(big * 16), 0, 255).astype(np.uint8)


digits = load_digits()
images = np.stack([upscale(im) for im in digits.images])
labels = digits.target.astype(np.uint8)
x = images.reshape(len(images), -1) / 255.0

clf = MLPClassifier(hidden_layer_sizes=(128,), activation="logistic", max_iter=300, random_state=0)
clf.fit(x[100:], labels[100:])
print("float accuracy on held-out:", clf.score(x[:100], labels[:100]))

# weights scaled by F_w; biases carried at the scale of the integer sums they join
w1 = np.rint(clf.coefs_[0].T * F_W).astype(np.int64)
b1 = np.rint(clf.intercepts_[0] * F_W * 255).astype(np.int64)
w2 = np.rint(clf.coefs_[1].T * F_W).astype(np.int64)
b2 = np.rint(clf.intercepts_[1] * F_W * F_W * 255).astype(np.int64)
model = MlpModel(w1, w2, b1, b2, weight_scale=F_W, activation_scale=F_A, slope=1, intercept=900)

sample = images[:10]
pred = [int(np.argmax(model.forward(im.reshape(-1)))) for im in sample]
print("integer model on the 10 bundled images:", pred, "labels:", labels[:10].tolist())
print("score magnitude bound bits:", model.max_abs_score().bit_length())

OUT.mkdir(parents=True, exist_ok=True)
doc = model.to_dict()
doc["note"] = "hidden width 128 is not from the source description; trained on upscaled 8x8 digits"
(OUT / "digits_mlp.json").write_text(json.dumps(doc))
write_idx(OUT / "digits-images.idx3-ubyte", sample)
write_idx(OUT / "digits-labels.idx1-ubyte", labels[:10])
