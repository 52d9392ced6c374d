import torch
import torch.nn as nn


def supported_hyperparameters():
    return {'lr', 'momentum'}


class Net(nn.Module):
    def __init__(self, in_shape, out_shape, prm, device):
        super().__init__()
        self.device = device
        self.vocab_size = out_shape[0]
        self.encoder = nn.Sequential(nn.Conv2d(in_shape[1], 32, 3), nn.AdaptiveAvgPool2d(1), nn.Flatten(), nn.Linear(32, 64))
        self.embed = nn.Embedding(self.vocab_size, 64)
        self.rnn = nn.GRU(64, 64, batch_first=True)
        self.fc = nn.Linear(64, self.vocab_size)
        layer = nn.TransformerDecoderLayer(64, 4, batch_first=True)
        self.dec = nn.TransformerDecoder(layer, num_layers=2, vocab_size=self.vocab_size)

    def train_setup(self, prm):
        self.to(self.device)
        self.criterion = nn.CrossEntropyLoss(ignore_index=0)
        self.optimizer = torch.optim.SGD(self.parameters(), lr=prm['lr'], momentum=prm['momentum'])

    def learn(self, train_data):
        for images, captions in train_data:
            logits, _ = self.forward(images, captions)
            loss = self.criterion(logits.reshape(-1, self.vocab_size), captions[:, 1:].reshape(-1))
            self.optimizer.zero_grad()
            loss.backward()
            self.optimizer.step()

    def forward(self, images, captions, hidden_state=None):
        feats = self.encoder(images).unsqueeze(0)
        out, hidden_state = self.rnn(self.embed(captions[:, :-1]), feats if hidden_state is None else hidden_state)
        return self.fc(out), hidden_state
