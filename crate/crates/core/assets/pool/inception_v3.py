class InceptionA(nn.Module):
    def __init__(self, in_ch, pool_features):
        super().__init__()
        self.branch1x1 = nn.Conv2d(in_ch, 64, 1)
        self.branch5x5 = nn.Sequential(nn.Conv2d(in_ch, 48, 1), nn.Conv2d(48, 64, 5, padding=2))
        self.branch3x3 = nn.Sequential(
            nn.Conv2d(in_ch, 64, 1), nn.Conv2d(64, 96, 3, padding=1), nn.Conv2d(96, 96, 3, padding=1)
        )
        self.branch_pool = nn.Sequential(nn.AvgPool2d(3, 1, 1), nn.Conv2d(in_ch, pool_features, 1))

    def forward(self, x):
        return torch.cat([self.branch1x1(x), self.branch5x5(x), self.branch3x3(x), self.branch_pool(x)], 1)
