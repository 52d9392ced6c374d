class InceptionModule(nn.Module):
    def __init__(self, in_ch, ch1x1, ch3x3red, ch3x3, ch5x5red, ch5x5, pool_proj):
        super().__init__()
        self.b1 = nn.Conv2d(in_ch, ch1x1, 1)
        self.b2 = nn.Sequential(nn.Conv2d(in_ch, ch3x3red, 1), nn.ReLU(True), nn.Conv2d(ch3x3red, ch3x3, 3, padding=1))
        self.b3 = nn.Sequential(nn.Conv2d(in_ch, ch5x5red, 1), nn.ReLU(True), nn.Conv2d(ch5x5red, ch5x5, 3, padding=1))
        self.b4 = nn.Sequential(nn.MaxPool2d(3, 1, 1), nn.Conv2d(in_ch, pool_proj, 1))

    def forward(self, x):
        return torch.cat([self.b1(x), self.b2(x), self.b3(x), self.b4(x)], 1)
