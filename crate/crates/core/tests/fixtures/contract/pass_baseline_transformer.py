import math

import torch
import torch.nn as nn


def supported_hyperparameters():
    return {'lr', 'momentum'}


class Encoder(nn.Module):
    def __init__(self, in_channels, hidden_size):
        super().__init__()
        self.backbone = nn.Sequential(
            nn.Conv2d(in_channels, 64, 7, 2, 3, bias=False),
            nn.BatchNorm2d(64),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, 2, 1),
            nn.Conv2d(64, 128, 3, 2, 1, bias=False),
            nn.BatchNorm2d(128),
            nn.ReLU(inplace=True),
            nn.Conv2d(128, 256, 3, 2, 1, bias=False),
            nn.BatchNorm2d(256),
            nn.ReLU(inplace=True),
        )
        self.pool = nn.AdaptiveAvgPool2d((1, 1))
        self.proj = nn.Linear(256, hidden_size)

    def forward(self, images):
        x = self.pool(self.backbone(images)).flatten(1)
        return self.proj(x).unsqueeze(1)


class PositionalEncoding(nn.Module):
    def __init__(self, d_model, max_len=512):
        super().__init__()
        pe = torch.zeros(max_len, d_model)
        position = torch.arange(0, max_len).unsqueeze(1).float()
        div = torch.exp(torch.arange(0, d_model, 2).float() * (-math.log(10000.0) / d_model))
        pe[:, 0::2] = torch.sin(position * div)
        pe[:, 1::2] = torch.cos(position * div)
        self.register_buffer('pe', pe.unsqueeze(0))

    def forward(self, x):
        return x + self.pe[:, : x.size(1)]


class Net(nn.Module):
    def __init__(self, in_shape, out_shape, prm, device):
        super().__init__()
        self.device = device
        self.vocab_size = int(out_shape[0])
        self.hidden_size = 768
        self.encoder = Encoder(int(in_shape[1]), self.hidden_size)
        self.embed = nn.Embedding(self.vocab_size, self.hidden_size, padding_idx=0)
        self.pos = PositionalEncoding(self.hidden_size)
        layer = nn.TransformerDecoderLayer(d_model=self.hidden_size, nhead=8, dropout=0.1, batch_first=True)
        self.decoder = nn.TransformerDecoder(layer, num_layers=2)
        self.fc = nn.Linear(self.hidden_size, self.vocab_size)

    def train_setup(self, prm):
        self.to(self.device)
        self.criterion = nn.CrossEntropyLoss(ignore_index=0, label_smoothing=0.1)
        self.optimizer = torch.optim.AdamW(self.parameters(), lr=prm['lr'])

    def learn(self, train_data):
        self.train()
        total = 0.0
        steps = 0
        for images, captions in train_data:
            images = images.to(self.device)
            captions = captions.to(self.device)
            targets = captions[:, 1:]
            logits, _ = self.forward(images, captions)
            loss = self.criterion(logits.reshape(-1, self.vocab_size), targets.reshape(-1))
            self.optimizer.zero_grad()
            loss.backward()
            self.optimizer.step()
            total += loss.item()
            steps += 1
        return total / max(steps, 1)

    def forward(self, images, captions, hidden_state=None):
        inputs = captions[:, :-1]
        memory = self.encoder(images)
        tgt = self.pos(self.embed(inputs))
        size = inputs.size(1)
        mask = torch.triu(torch.ones(size, size, dtype=torch.bool, device=inputs.device), diagonal=1)
        out = self.decoder(tgt, memory, tgt_mask=mask, tgt_key_padding_mask=inputs.eq(0))
        logits = self.fc(out)
        assert logits.shape == (captions.size(0), captions.size(1) - 1, self.vocab_size)
        return logits, memory
