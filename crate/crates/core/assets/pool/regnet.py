class XBlock(nn.Module):
    def __init__(self, in_ch, out_ch, stride, group_width, bottleneck=1.0):
        super().__init__()
        mid = int(out_ch * bottleneck)
        groups = max(1, mid // group_width)
        self.a = nn.Sequential(nn.Conv2d(in_ch, mid, 1, bias=False), nn.BatchNorm2d(mid), nn.ReLU(inplace=True))
        self.b = nn.Sequential(
            nn.Conv2d(mid, mid, 3, stride, 1, groups=groups, bias=False), nn.BatchNorm2d(mid), nn.ReLU(inplace=True)
        )
        self.c = nn.Sequential(nn.Conv2d(mid, out_ch, 1, bias=False), nn.BatchNorm2d(out_ch))
        self.proj = None if stride == 1 and in_ch == out_ch else nn.Conv2d(in_ch, out_ch, 1, stride, bias=False)

    def forward(self, x):
        shortcut = x if self.proj is None else self.proj(x)
        return torch.relu(shortcut + self.c(self.b(self.a(x))))
