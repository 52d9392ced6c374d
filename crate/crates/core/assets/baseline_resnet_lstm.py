import torch
import torch.nn as nn


def supported_hyperparameters():
    return {'lr', 'momentum'}


class BasicBlock(nn.Module):
    def __init__(self, in_ch, out_ch, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        self.shortcut = nn.Sequential()
        if stride != 1 or in_ch != out_ch:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + self.shortcut(x))


class Encoder(nn.Module):
    def __init__(self, in_channels, hidden_size):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(in_channels, 64, 7, 2, 3, bias=False),
            nn.BatchNorm2d(64),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, 2, 1),
        )
        self.layers = nn.Sequential(
            BasicBlock(64, 64),
            BasicBlock(64, 128, stride=2),
            BasicBlock(128, 256, stride=2),
        )
        self.pool = nn.AdaptiveAvgPool2d((1, 1))
        self.proj = nn.Linear(256, hidden_size)

    def forward(self, images):
        x = self.layers(self.stem(images))
        x = self.pool(x).flatten(1)
        return self.proj(x).unsqueeze(1)


class Decoder(nn.Module):
    def __init__(self, hidden_size, vocab_size, dropout=0.1):
        super().__init__()
        self.embed = nn.Embedding(vocab_size, hidden_size, padding_idx=0)
        self.lstm = nn.LSTM(hidden_size, hidden_size, batch_first=True)
        self.dropout = nn.Dropout(dropout)
        self.fc = nn.Linear(hidden_size, vocab_size)

    def forward(self, features, inputs, hidden_state=None):
        emb = self.dropout(self.embed(inputs))
        seq = torch.cat([features, emb], dim=1)
        out, hidden_state = self.lstm(seq, hidden_state)
        return self.fc(out[:, 1:, :]), hidden_state


class Net(nn.Module):
    def __init__(self, in_shape, out_shape, prm, device):
        super().__init__()
        self.device = device
        self.vocab_size = int(out_shape[0])
        self.hidden_size = 640
        self.encoder = Encoder(int(in_shape[1]), self.hidden_size)
        self.decoder = Decoder(self.hidden_size, self.vocab_size)

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
            nn.utils.clip_grad_norm_(self.parameters(), 3.0)
            self.optimizer.step()
            total += loss.item()
            steps += 1
        return total / max(steps, 1)

    def forward(self, images, captions, hidden_state=None):
        inputs = captions[:, :-1]
        features = self.encoder(images)
        logits, hidden_state = self.decoder(features, inputs, hidden_state)
        assert logits.shape == (captions.size(0), captions.size(1) - 1, self.vocab_size)
        return logits, hidden_state
