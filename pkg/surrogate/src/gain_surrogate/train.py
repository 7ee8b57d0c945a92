"""Training loop and checkpoint layout."""

from dataclasses import asdict, dataclass

import torch
from torch.utils.data import DataLoader

from .data import PairDataset, load_manifest, manifest_digest, split_by_map
from .model import GainUNet, SurrogateSpec, bce_loss, default_spec


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 8
    lr: float = 1e-3
    holdout_maps: int = 0
    psi_clip: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


def evaluate(model, dataset, batch_size=8):
    model.eval()
    total, n = 0.0, 0
    with torch.no_grad():
        for x, t in DataLoader(dataset, batch_size=batch_size):
            total += bce_loss(model(x), t).item() * x.shape[0]
            n += x.shape[0]
    return total / n


def train(data_dir, spec: SurrogateSpec | None, config: TrainConfig,
          out_path, log=print):
    """Fit the surrogate on a pair directory and write a checkpoint.

    The checkpoint carries the spec, the config, the full loss history
    (including the untrained validation loss, which a zero-initialized
    head makes exactly log 2), and the sha256 of the manifest it was
    trained from.
    """
    manifest = load_manifest(data_dir)
    train_entries, val_entries = split_by_map(manifest, config.holdout_maps)
    train_set = PairDataset(data_dir, train_entries, config.psi_clip)
    val_set = (PairDataset(data_dir, val_entries, config.psi_clip)
               if val_entries else None)
    if val_set is not None and val_set.dx != train_set.dx:
        raise ValueError("validation pairs use a different grid spacing")
    spec = spec or default_spec(dim=train_set.inputs[0].ndim - 1)
    if train_set.inputs[0].ndim - 1 != spec.dim:
        raise ValueError(
            f"{spec.dim}-D spec fed {train_set.inputs[0].ndim - 1}-D pairs"
        )

    torch.manual_seed(config.seed)
    model = GainUNet(spec)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    loader = DataLoader(
        train_set, batch_size=config.batch_size, shuffle=True,
        generator=torch.Generator().manual_seed(config.seed),
    )

    history = {"train": [], "val": []}
    if val_set is not None:
        history["val_init"] = evaluate(model, val_set)
        log(f"untrained val loss {history['val_init']:.4f}")
    for epoch in range(config.epochs):
        model.train()
        total, n = 0.0, 0
        for x, t in loader:
            opt.zero_grad()
            loss = bce_loss(model(x), t)
            loss.backward()
            opt.step()
            total += loss.item() * x.shape[0]
            n += x.shape[0]
        history["train"].append(total / n)
        line = f"epoch {epoch + 1:3d}  train {history['train'][-1]:.4f}"
        if val_set is not None:
            history["val"].append(evaluate(model, val_set))
            line += f"  val {history['val'][-1]:.4f}"
        log(line)

    checkpoint = {
        "spec": asdict(spec),
        "config": asdict(config),
        "state_dict": model.state_dict(),
        "history": history,
        "data_digest": manifest_digest(data_dir),
        "n_train": len(train_set),
        "n_val": len(val_set) if val_set is not None else 0,
        "dx": train_set.dx,
        "torch_version": torch.__version__,
    }
    torch.save(checkpoint, out_path)
    return checkpoint


def load_model(checkpoint_path):
    """Rebuild the trained network in inference mode."""
    ckpt = torch.load(checkpoint_path, map_location="cpu",
                      weights_only=False)
    model = GainUNet(SurrogateSpec(**ckpt["spec"]))
    model.load_state_dict(ckpt["state_dict"])
    model.eval()
    return model, ckpt
